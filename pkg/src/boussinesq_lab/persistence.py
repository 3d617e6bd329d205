"""
Binary snapshots of a ``(theta, omega)`` pair and CSV norm series.

Snapshot layout, little-endian::

    b"BQ2D"  u16 version  u32 n  u32 count
    count x (i32 k1, i32 k2, f64 re, f64 im)   # theta
    count x (i32 k1, i32 k2, f64 re, f64 im)   # omega

Both blocks list the same modes: every ``k`` where either field is nonzero.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .dynamics import TrajectoryRecord
from .spectral import SpectralField, WaveGrid

MAGIC = b"BQ2D"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHII")
_MODE = np.dtype([("k1", "<i4"), ("k2", "<i4"), ("re", "<f8"), ("im", "<f8")])

SERIES_COLUMNS = ("t", "theta_l2", "theta_h1", "omega_l2", "omega_hneg")


class SnapshotFormatError(ValueError):
    """A snapshot file is malformed or violates the field invariants."""


def write_snapshot(theta: SpectralField, omega: SpectralField, path) -> None:
    if theta.grid.n != omega.grid.n:
        raise ValueError("theta and omega must share one grid")
    grid = theta.grid
    # compare bit patterns so that signed zeros survive the round trip
    bits = theta.coeffs.view(np.uint64) | omega.coeffs.view(np.uint64)
    stored = bits.reshape(grid.n, grid.n, 2).any(axis=-1) & grid.structural_mask
    rows, cols = np.nonzero(stored)
    k1 = grid.k1[rows, cols].astype("<i4")
    k2 = grid.k2[rows, cols].astype("<i4")
    blocks = []
    for f in (theta, omega):
        rec = np.empty(len(rows), dtype=_MODE)
        rec["k1"], rec["k2"] = k1, k2
        rec["re"] = f.coeffs[rows, cols].real
        rec["im"] = f.coeffs[rows, cols].imag
        blocks.append(rec.tobytes())
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, grid.n, len(rows)))
        for b in blocks:
            fh.write(b)


def read_snapshot(path, *, atol: float = 1e-12) -> tuple[SpectralField, SpectralField]:
    """Load a snapshot; raises :class:`SnapshotFormatError` on any violation.

    Coefficients are restored bit-for-bit.  ``atol`` (relative to the largest
    coefficient) bounds the accepted departure from Hermitian symmetry.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise SnapshotFormatError(f"header truncated: {len(data)} bytes")
    magic, version, n, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise SnapshotFormatError(f"unsupported format version {version}")
    try:
        grid = WaveGrid(int(n))
    except ValueError as exc:
        raise SnapshotFormatError(f"bad grid size in header: {exc}") from None
    need = _HEADER.size + 2 * count * _MODE.itemsize
    if len(data) != need:
        raise SnapshotFormatError(f"payload size {len(data)} does not match header (expected {need})")
    recs = np.frombuffer(data, dtype=_MODE, count=2 * count, offset=_HEADER.size)
    th_rec, om_rec = recs[:count], recs[count:]
    if not (np.array_equal(th_rec["k1"], om_rec["k1"]) and np.array_equal(th_rec["k2"], om_rec["k2"])):
        raise SnapshotFormatError("theta and omega blocks list different modes")
    fields = [_assemble(grid, r, name, atol) for r, name in ((th_rec, "theta"), (om_rec, "omega"))]
    return fields[0], fields[1]


def _assemble(grid: WaveGrid, rec: np.ndarray, name: str, atol: float) -> SpectralField:
    n = grid.n
    coeffs = np.zeros((n, n), dtype=np.complex128)
    for k1, k2 in zip(rec["k1"], rec["k2"]):
        if not (-n // 2 < k1 < n // 2 and -n // 2 < k2 < n // 2):
            raise SnapshotFormatError(f"{name}: mode ({k1}, {k2}) outside the representable range for n={n}")
    rows, cols = rec["k1"] % n, rec["k2"] % n
    if len(set(zip(rows.tolist(), cols.tolist()))) != len(rec):
        raise SnapshotFormatError(f"{name}: duplicate modes")
    coeffs[rows, cols] = rec["re"] + 1j * rec["im"]
    if coeffs[0, 0] != 0:
        raise SnapshotFormatError(f"{name}: zero-mean violation, coeff(0) = {coeffs[0, 0]}")
    scale = max(float(np.abs(coeffs).max(initial=0.0)), 1.0)
    asym = np.abs(coeffs - np.conj(coeffs[grid.neg_index])).max(initial=0.0)
    if asym > atol * scale:
        raise SnapshotFormatError(f"{name}: Hermitian symmetry violated (max defect {asym:.3e})")
    return SpectralField(grid, coeffs, trusted=True)


def write_series_csv(rec: TrajectoryRecord, path) -> None:
    """Per-step norm series with columns ``t, theta_l2, theta_h1, omega_l2, omega_hneg``."""
    cols = (rec.times, rec.theta_l2, rec.theta_h1, rec.omega_l2, rec.omega_hneg)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SERIES_COLUMNS)
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        values = np.array([[float(v) for v in row] for row in reader])
    return header, values
