"""
Transport noise: coefficient families, the fields e_k, complex Brownian drivers.

The noise acting on a scalar f is

    sqrt(2 nu) / ||sigma||_2 * sum_k sigma_k (e_k . grad f) dW^k,

with ``e_k(x) = exp(2 pi i k.x) * (+/-) k_perp / |k|`` (``+`` on the positive
cone, ``-`` on its mirror), ``k_perp = (-k2, k1)``, and complex Brownian motions
``W^k = B^k + i C^k`` paired by ``W^{-k} = conj(W^k)`` so that
``[W^k, W^l]_t = 2 t delta_{k,-l}``.  With this sign convention
``e_{-k} = conj(e_k)`` and every noise term is a real field.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from .spectral import TWO_PI, SpectralField, WaveGrid, gradient

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class GalerkinOverflowError(ValueError):
    """The grid cannot hold the modes ``k + m`` produced by the noise."""


def splitmix64(x: int) -> int:
    """One SplitMix64 output for state ``x`` (finaliser of Steele et al.)."""
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def split_seed(master_seed: int, index: int) -> int:
    """Child seed for trajectory ``index`` of an ensemble.

    ``child = splitmix64(splitmix64(master) ^ splitmix64(index + 1))``, all
    arithmetic modulo 2**64.  Stable across runs and platforms.
    """
    return splitmix64(splitmix64(int(master_seed) & MASK64) ^ splitmix64((int(index) + 1) & MASK64))


def in_positive_cone(k: tuple[int, int]) -> bool:
    """``Z^2_+ = {k1 > 0} U {k1 = 0, k2 > 0}``."""
    return k[0] > 0 or (k[0] == 0 and k[1] > 0)


def lattice_shell(r2: int) -> list[tuple[int, int]]:
    """All ``k in Z^2`` with ``|k|^2 = r2``."""
    r = int(np.ceil(np.sqrt(r2)))
    return [(a, b) for a in range(-r, r + 1) for b in range(-r, r + 1) if a * a + b * b == r2]


@dataclass(frozen=True, eq=False)
class SigmaFamily:
    """Finitely supported, even noise coefficients ``{sigma_k}`` with intensity ``nu``.

    ``modes`` is an ``(M, 2)`` integer array listing the full support (both
    ``k`` and ``-k``) in lexicographic order; ``values`` holds ``sigma_k``.
    Use :meth:`from_mapping` or :func:`sigma_example` to build one.
    """

    nu: float
    modes: np.ndarray
    values: np.ndarray
    symmetric: bool = field(default=True)

    @classmethod
    def from_mapping(
        cls,
        nu: float,
        coeffs: Mapping[tuple[int, int], float],
        *,
        require_symmetry: bool = True,
    ) -> "SigmaFamily":
        if not nu > 0:
            raise ValueError(f"noise intensity nu must be > 0, got {nu}")
        items = sorted((tuple(map(int, k)), float(v)) for k, v in coeffs.items() if v != 0)
        if not items:
            raise ValueError("sigma must have at least one nonzero coefficient")
        table = dict(items)
        if (0, 0) in table:
            raise ValueError("sigma_0 must vanish")
        for k, v in items:
            if table.get((-k[0], -k[1])) != v:
                raise ValueError(f"sigma must be even: sigma{k} != sigma{(-k[0], -k[1])}")
        symmetric = _has_shell_symmetry(table)
        if require_symmetry and not symmetric:
            raise ValueError("sigma violates the symmetry sigma_k = sigma_l for |k| = |l|")
        modes = np.array([k for k, _ in items], dtype=np.int64)
        values = np.array([v for _, v in items])
        modes.setflags(write=False)
        values.setflags(write=False)
        return cls(float(nu), modes, values, symmetric)

    @property
    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.values**2)))

    @property
    def linf_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def prefactor(self) -> float:
        """``sqrt(2 nu) / ||sigma||_2``."""
        return float(np.sqrt(2.0 * self.nu) / self.l2_norm)

    @property
    def extent(self) -> int:
        """Largest ``max(|k1|, |k2|)`` in the support."""
        return int(np.abs(self.modes).max())

    @cached_property
    def positive(self) -> np.ndarray:
        """Boolean mask over ``modes`` selecting the positive cone."""
        k1, k2 = self.modes[:, 0], self.modes[:, 1]
        return (k1 > 0) | ((k1 == 0) & (k2 > 0))

    @property
    def positive_modes(self) -> np.ndarray:
        return self.modes[self.positive]

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {(int(a), int(b)): float(v) for (a, b), v in zip(self.modes, self.values)}

    def scaled(self, c: float) -> "SigmaFamily":
        if not c > 0:
            raise ValueError("scale must be positive")
        return SigmaFamily.from_mapping(
            self.nu, {k: c * v for k, v in self.as_dict().items()}, require_symmetry=False
        )


def _has_shell_symmetry(table: dict[tuple[int, int], float]) -> bool:
    """Every shell ``|k|^2 = r2`` touched by the support is fully covered with one value."""
    shells: dict[int, set[float]] = {}
    for (a, b), v in table.items():
        shells.setdefault(a * a + b * b, set()).add(v)
    if any(len(vals) != 1 for vals in shells.values()):
        return False
    r = int(np.ceil(np.sqrt(max(shells))))
    a, b = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1), indexing="ij")
    lattice_counts = np.bincount((a * a + b * b).ravel())
    support_counts = Counter(a * a + b * b for a, b in table)
    return all(lattice_counts[r2] == c for r2, c in support_counts.items())


def _lattice_disc(radius: int) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.meshgrid(np.arange(-radius, radius + 1), np.arange(-radius, radius + 1), indexing="ij")
    return a.ravel(), b.ravel()


def sigma_example(N: int, beta: float, nu: float = 1.0) -> SigmaFamily:
    """``sigma^N_k = |k|^-beta`` on ``|k| <= N`` (beta <= 1) or on ``N <= |k| <= 2N`` (beta > 1)."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    lo, hi = (1, N) if beta <= 1 else (N, 2 * N)
    a, b = _lattice_disc(hi)
    r2 = a * a + b * b
    keep = (r2 > 0) & (r2 >= lo * lo) & (r2 <= hi * hi)
    vals = r2[keep].astype(np.float64) ** (-beta / 2.0)
    coeffs = {(int(x), int(y)): float(v) for x, y, v in zip(a[keep], b[keep], vals)}
    return SigmaFamily.from_mapping(nu, coeffs)


def noise_ratio(sigma: SigmaFamily) -> float:
    """``||sigma||_inf / ||sigma||_2``; the scaling limit needs this to vanish."""
    return sigma.linf_norm / sigma.l2_norm


def covariance_origin(sigma: SigmaFamily) -> np.ndarray:
    """``Q(x, x) = 2 nu / ||sigma||^2 sum_k sigma_k^2 k_perp (x) k_perp / |k|^2``.

    Equals ``nu * I_2`` exactly when sigma has the shell symmetry.
    """
    k = sigma.modes.astype(np.float64)
    kp = np.stack([-k[:, 1], k[:, 0]], axis=1)
    w = sigma.values**2 / np.sum(k**2, axis=1)
    acc = np.einsum("m,mi,mj->ij", w, kp, kp)
    return 2.0 * sigma.nu / sigma.l2_norm**2 * acc


@dataclass
class BrownianDriver:
    """Increment stream for the complex Brownian motions on the positive cone.

    Each call to :meth:`sample_increments` draws ``substeps`` independent
    sub-increments of length ``dt / substeps`` and returns their sum, so a run
    with ``(dt, substeps=2)`` follows the same Brownian path as a run with
    ``(dt / 2, substeps=1)`` from the same seed.
    """

    seed: int
    active_modes: np.ndarray
    substeps: int = 1

    def __post_init__(self):
        self.active_modes = np.asarray(self.active_modes, dtype=np.int64).reshape(-1, 2)
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        self._rng = np.random.Generator(np.random.PCG64(int(self.seed) & MASK64))

    @classmethod
    def for_sigma(cls, sigma: SigmaFamily, seed: int, substeps: int = 1) -> "BrownianDriver":
        return cls(seed, sigma.positive_modes, substeps)

    def sample_increments(self, dt: float) -> np.ndarray:
        """Complex ``dW^k`` for each active mode: ``E|dW|^2 = 2 dt``, ``E[dW^2] = 0``."""
        if not dt > 0:
            raise ValueError("dt must be positive")
        m = len(self.active_modes)
        h = np.sqrt(dt / self.substeps)
        total = np.zeros(m, np.complex128)
        for _ in range(self.substeps):
            z = self._rng.standard_normal((2, m))
            total += h * (z[0] + 1j * z[1])
        return total


class ZeroDriver(BrownianDriver):
    """Driver whose increments are identically zero (noise switched off)."""

    def sample_increments(self, dt: float) -> np.ndarray:
        if not dt > 0:
            raise ValueError("dt must be positive")
        return np.zeros(len(self.active_modes), np.complex128)


class NoiseOperator:
    """Precomputed per-(sigma, grid) tables for evaluating the transport noise.

    ``increments`` arrays are aligned with ``sigma.positive_modes``.
    """

    def __init__(self, sigma: SigmaFamily, grid: WaveGrid):
        self.sigma = sigma
        self.grid = grid
        kp = sigma.positive_modes
        if sigma.extent >= grid.n // 2:
            raise GalerkinOverflowError(
                f"galerkin overflow: noise support extent {sigma.extent} does not fit on n={grid.n}"
            )
        vals = sigma.values[sigma.positive]
        knorm = np.sqrt(np.sum(kp.astype(np.float64) ** 2, axis=1))
        # real amplitude of e_k on the positive cone, times prefactor * sigma_k
        self._a1 = sigma.prefactor * vals * (-kp[:, 1]) / knorm
        self._a2 = sigma.prefactor * vals * kp[:, 0] / knorm
        self._pos = (kp[:, 0] % grid.n, kp[:, 1] % grid.n)
        self._neg = ((-kp[:, 0]) % grid.n, (-kp[:, 1]) % grid.n)

    def check_fits(self, f: SpectralField) -> None:
        if f.support_extent() + self.sigma.extent >= self.grid.n // 2:
            raise GalerkinOverflowError(
                "galerkin overflow: modes k + m with k in supp(sigma) and m in supp(f) "
                f"exceed the {self.grid.n}^2 grid (extents {self.sigma.extent} + {f.support_extent()})"
            )

    def velocity(self, increments: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Physical noise velocity ``eta dt = prefactor * sum_k sigma_k e_k dW^k``."""
        n = self.grid.n
        out = []
        for a in (self._a1, self._a2):
            c = np.zeros((n, n), np.complex128)
            amp = a * increments
            c[self._pos] = amp
            c[self._neg] = np.conj(amp)
            out.append(np.fft.ifft2(c).real * n**2)
        return out[0], out[1]

    def apply(
        self,
        f: SpectralField,
        increments: np.ndarray,
        *,
        eta: tuple[np.ndarray, np.ndarray] | None = None,
        grad_f: tuple[SpectralField, SpectralField] | None = None,
        check: bool = True,
    ) -> SpectralField:
        """Pseudo-spectral evaluation of the (unprojected) noise term; exact when it fits."""
        if check:
            self.check_fits(f)
        if eta is None:
            eta = self.velocity(increments)
        if grad_f is None:
            grad_f = gradient(f)
        n = self.grid.n
        g1 = np.fft.ifft2(grad_f[0].coeffs).real
        g2 = np.fft.ifft2(grad_f[1].coeffs).real
        return SpectralField(self.grid, np.fft.fft2(eta[0] * g1 + eta[1] * g2))


def _transport_by_mode(f: SpectralField, k: np.ndarray, sign: float) -> np.ndarray:
    """Coefficients of ``e_k . grad f`` by exact spectral shift ``m -> m + k``."""
    g = f.grid
    kn = float(np.hypot(k[0], k[1]))
    d1, d2 = sign * (-k[1]) / kn, sign * k[0] / kn
    shifted = (1j * TWO_PI) * (d1 * g.k1 + d2 * g.k2) * f.coeffs
    return np.roll(shifted, shift=(int(k[0]), int(k[1])), axis=(0, 1))


def noise_term(
    f: SpectralField,
    sigma: SigmaFamily,
    increments: np.ndarray,
    *,
    galerkin_N: int | None = None,
    method: str = "shift",
) -> SpectralField:
    """``prefactor * sum_k sigma_k (e_k . grad f) dW^k`` over the full support.

    ``method="shift"`` sums exact spectral shifts mode by mode;
    ``method="fft"`` multiplies the noise velocity and ``grad f`` on the grid.
    Both are exact when the shifted modes fit; otherwise
    :class:`GalerkinOverflowError` is raised.  When a Galerkin cutoff is given
    (or set on the grid) the result is projected onto ``H_N``.
    """
    g = f.grid
    increments = np.asarray(increments, dtype=np.complex128)
    op = NoiseOperator(sigma, g)
    if increments.shape != (len(sigma.positive_modes),):
        raise ValueError("increments must align with sigma.positive_modes")
    if method == "fft":
        out = op.apply(f, increments)
    elif method == "shift":
        op.check_fits(f)
        acc = np.zeros((g.n, g.n), np.complex128)
        pref = sigma.prefactor
        for k, s, dw in zip(sigma.positive_modes, sigma.values[sigma.positive], increments):
            if dw == 0:
                continue
            acc += pref * s * dw * _transport_by_mode(f, k, 1.0)
        # -k lies in the negative cone: e_{-k} = conj(e_k), dW^{-k} = conj(dW^k)
        out = SpectralField(g, acc + np.conj(acc[g.neg_index]), trusted=True)
    else:
        raise ValueError(f"unknown method {method!r}")
    N = galerkin_N if galerkin_N is not None else g.galerkin_cutoff
    if N is not None:
        out = SpectralField(g, out.coeffs * g.galerkin_mask(N), trusted=True)
    return out


def transport_field(f: SpectralField, k: tuple[int, int]) -> np.ndarray:
    """Coefficients of the complex field ``e_k . grad f`` for one lattice mode."""
    k = np.asarray(k, dtype=np.int64)
    sign = 1.0 if in_positive_cone((int(k[0]), int(k[1]))) else -1.0
    return _transport_by_mode(f, k, sign)


def ito_correction(f: SpectralField, sigma: SigmaFamily, galerkin_N: int | None = None) -> float:
    """``4 nu / ||sigma||^2 * sum_k sigma_k^2 ||P(e_k . grad f)||^2`` with P = Pi_N or identity.

    For shell-symmetric sigma and no projection this equals ``2 nu ||grad f||^2``.
    """
    g = f.grid
    NoiseOperator(sigma, g).check_fits(f)
    mask = g.galerkin_mask(galerkin_N) if galerkin_N is not None else None
    acc = 0.0
    for k, s in zip(sigma.modes, sigma.values):
        c = transport_field(f, (int(k[0]), int(k[1])))
        if mask is not None:
            c = c * mask
        acc += s * s * float(np.sum(c.real**2 + c.imag**2))
    return 4.0 * sigma.nu / sigma.l2_norm**2 * acc
