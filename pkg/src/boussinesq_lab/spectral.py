"""
Fourier representation of zero-mean real fields on the unit torus T^2.

Fields are stored as full complex coefficient arrays in numpy FFT layout:
``coeffs[i, j]`` is the amplitude of ``exp(2*pi*i*(k1*x1 + k2*x2))`` with
``k1 = fftfreq(n)[i] * n`` and ``k2 = fftfreq(n)[j] * n``.  The normalisation is
``coeffs = fft2(values) / n**2`` so that Parseval reads
``||f||_{L^2}^2 = sum_k |coeffs_k|^2``.

Two modes are pinned to zero in every field: ``k = 0`` (zero average) and the
Nyquist lines ``k1 = n/2`` or ``k2 = n/2`` (no Hermitian partner on the grid).
All multipliers carry the ``2*pi`` factors explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Mapping

import numpy as np

Velocity = tuple["SpectralField", "SpectralField"]

TWO_PI = 2.0 * np.pi


class GridMismatchError(ValueError):
    """Raised when fields living on different grids are combined."""


@lru_cache(maxsize=None)
def _wavenumbers(n: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.rint(np.fft.fftfreq(n) * n).astype(np.int64)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    k1.setflags(write=False)
    k2.setflags(write=False)
    return k1, k2


@dataclass(frozen=True)
class WaveGrid:
    """Square ``n x n`` collocation grid and its integer wavenumber lattice.

    ``galerkin_cutoff`` is the optional Galerkin truncation ``N``: only modes with
    ``0 < |k| <= N`` (Euclidean norm) are kept by :func:`project_galerkin` when
    no explicit cutoff is given.
    """

    n: int
    galerkin_cutoff: int | None = None

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 8 or self.n % 2:
            raise ValueError(f"grid size must be an even integer >= 8, got {self.n!r}")
        if self.galerkin_cutoff is not None:
            if self.galerkin_cutoff < 1:
                raise ValueError("galerkin_cutoff must be >= 1")
            if 3 * self.galerkin_cutoff >= self.n:
                raise ValueError(
                    f"grid n={self.n} cannot resolve Galerkin cutoff "
                    f"N={self.galerkin_cutoff} without aliasing (need n > 3N)"
                )

    @property
    def k1(self) -> np.ndarray:
        return _wavenumbers(self.n)[0]

    @property
    def k2(self) -> np.ndarray:
        return _wavenumbers(self.n)[1]

    @cached_property
    def ksq(self) -> np.ndarray:
        return (self.k1**2 + self.k2**2).astype(np.float64)

    @cached_property
    def kmax(self) -> np.ndarray:
        """Per-mode ``max(|k1|, |k2|)``."""
        return np.maximum(np.abs(self.k1), np.abs(self.k2))

    @cached_property
    def structural_mask(self) -> np.ndarray:
        """Modes a field may carry: everything except k = 0 and the Nyquist lines."""
        half = self.n // 2
        mask = (np.abs(self.k1) != half) & (np.abs(self.k2) != half)
        mask[0, 0] = False
        return mask

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3 rule on ``max(|k1|, |k2|)``; strict so that quadratic products never alias back."""
        return (3 * self.kmax < self.n) & self.structural_mask

    @cached_property
    def neg_index(self) -> tuple[np.ndarray, np.ndarray]:
        """Index arrays mapping each mode k to the storage slot of -k."""
        idx = (-np.arange(self.n)) % self.n
        return np.ix_(idx, idx)

    @cached_property
    def x(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical collocation points ``(x1, x2)`` in ``[0, 1)^2``."""
        s = np.arange(self.n) / self.n
        return tuple(np.meshgrid(s, s, indexing="ij"))

    def index_of(self, k: tuple[int, int]) -> tuple[int, int]:
        """Storage slot of lattice mode ``k``; raises if k is not representable."""
        k1, k2 = int(k[0]), int(k[1])
        half = self.n // 2
        if not (-half < k1 < half and -half < k2 < half):
            raise ValueError(f"mode {k} is not representable on a {self.n}^2 grid")
        return k1 % self.n, k2 % self.n

    def galerkin_mask(self, N: float) -> np.ndarray:
        return (self.ksq <= float(N) ** 2) & self.structural_mask

    def with_cutoff(self, N: int | None) -> "WaveGrid":
        return WaveGrid(self.n, N)

    def same_lattice(self, other: "WaveGrid") -> bool:
        return self.n == other.n


class SpectralField:
    """Real zero-mean scalar field stored by its Fourier coefficients.

    Construction projects onto the admissible modes and symmetrises, so
    ``coeff(-k) == conj(coeff(k))`` holds bit-exactly for every instance.
    """

    __slots__ = ("grid", "coeffs")
    __array_ufunc__ = None

    def __init__(self, grid: WaveGrid, coeffs: np.ndarray, *, trusted: bool = False):
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.shape != (grid.n, grid.n):
            raise ValueError(f"coefficient array shape {coeffs.shape} != {(grid.n, grid.n)}")
        if not trusted:
            coeffs = _hermitize(grid, np.where(grid.structural_mask, coeffs, 0))
        self.grid = grid
        self.coeffs = coeffs

    @classmethod
    def zeros(cls, grid: WaveGrid) -> "SpectralField":
        return cls(grid, np.zeros((grid.n, grid.n), np.complex128), trusted=True)

    @classmethod
    def from_physical(cls, grid: WaveGrid, values: np.ndarray) -> "SpectralField":
        values = np.asarray(values, dtype=np.float64)
        return cls(grid, np.fft.fft2(values) / grid.n**2)

    @classmethod
    def from_modes(cls, grid: WaveGrid, modes: Mapping[tuple[int, int], complex]) -> "SpectralField":
        """Build a field from ``{k: amplitude}``; the conjugate partner of each k is filled in.

        Giving both k and -k is allowed only if they are already conjugate.
        """
        c = np.zeros((grid.n, grid.n), np.complex128)
        for k, a in modes.items():
            i = grid.index_of(k)
            j = grid.index_of((-k[0], -k[1]))
            if (k[0], k[1]) == (0, 0):
                raise ValueError("the k = 0 mode is pinned to zero")
            if c[j] != 0 and c[j] != np.conj(a):
                raise ValueError(f"amplitudes for {k} and its negative are not conjugate")
            c[i] = a
            c[j] = np.conj(a)
        return cls(grid, c)

    def to_physical(self) -> np.ndarray:
        return np.fft.ifft2(self.coeffs).real * self.grid.n**2

    def coeff(self, k: tuple[int, int]) -> complex:
        return complex(self.coeffs[self.grid.index_of(k)])

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.coeffs.real**2 + self.coeffs.imag**2)))

    def inner(self, other: "SpectralField") -> float:
        """Real L^2 inner product."""
        _check_grids(self, other)
        return float(np.sum(self.coeffs * np.conj(other.coeffs)).real)

    def is_hermitian(self, atol: float = 0.0) -> bool:
        c = self.coeffs
        return bool(np.all(np.abs(c - np.conj(c[self.grid.neg_index])) <= atol))

    def support_extent(self) -> int:
        """Largest ``max(|k1|, |k2|)`` over nonzero coefficients (0 for the zero field)."""
        nz = self.coeffs != 0
        return int(self.grid.kmax[nz].max()) if nz.any() else 0

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy(), trusted=True)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_grids(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs, trusted=True)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_grids(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs, trusted=True)

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs, trusted=True)

    def __mul__(self, scalar: float) -> "SpectralField":
        if isinstance(scalar, complex) or np.iscomplexobj(scalar):
            raise TypeError("only real scalars keep a field real")
        return SpectralField(self.grid, self.coeffs * float(scalar), trusted=True)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"SpectralField(n={self.grid.n}, l2={self.l2_norm():.6g})"


def _hermitize(grid: WaveGrid, c: np.ndarray) -> np.ndarray:
    # exact: (a + conj(b))/2 and conj((b + conj(a))/2) round identically
    return 0.5 * (c + np.conj(c[grid.neg_index]))


def _check_grids(*fields: SpectralField) -> None:
    n = fields[0].grid.n
    for f in fields[1:]:
        if f.grid.n != n:
            raise GridMismatchError(f"grid mismatch: n={n} vs n={f.grid.n}")


def _wrap(grid: WaveGrid, c: np.ndarray) -> SpectralField:
    return SpectralField(grid, c, trusted=True)


def gradient(f: SpectralField) -> Velocity:
    """Return ``(d1 f, d2 f)``; multiplier ``2*pi*i*k_j``."""
    g = f.grid
    c = f.coeffs
    return _wrap(g, (1j * TWO_PI) * g.k1 * c), _wrap(g, (1j * TWO_PI) * g.k2 * c)


def laplacian(f: SpectralField) -> SpectralField:
    g = f.grid
    return _wrap(g, -(TWO_PI**2) * g.ksq * f.coeffs)


@lru_cache(maxsize=None)
def _inverse_laplacian_symbol(n: int, eps: float) -> np.ndarray:
    g = WaveGrid(n)
    with np.errstate(divide="ignore"):
        if eps == 1.0:
            w = 1.0 / (TWO_PI * g.ksq)
        else:
            w = TWO_PI * (TWO_PI * np.sqrt(g.ksq)) ** (-(1.0 + eps))
    w[0, 0] = 0.0
    w.setflags(write=False)
    return w


def biot_savart(omega: SpectralField) -> Velocity:
    """Divergence-free velocity with vorticity ``omega``.

    ``u_k = -i k_perp omega_k / (2 pi |k|^2)`` with ``k_perp = (-k2, k1)``, which is
    ``u = grad_perp psi`` for the stream function solving ``lap psi = omega``.
    """
    return _biot_savart_symbol(omega, 1.0)


def biot_savart_eps(omega: SpectralField, eps: float) -> Velocity:
    """Velocity from the smoother kernel ``-grad_perp (-lap)^{-(1+eps)/2}``.

    ``u_k = -2 pi i k_perp (2 pi |k|)^{-(1+eps)} omega_k``; ``eps = 1`` is the
    Biot-Savart law.
    """
    eps = float(eps)
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"kernel exponent eps must lie in (0, 1], got {eps}")
    return _biot_savart_symbol(omega, eps)


def _biot_savart_symbol(omega: SpectralField, eps: float) -> Velocity:
    g = omega.grid
    a = (-1j) * _inverse_laplacian_symbol(g.n, eps) * omega.coeffs
    return _wrap(g, -g.k2 * a), _wrap(g, g.k1 * a)


def divergence(u: Velocity) -> SpectralField:
    g = u[0].grid
    return _wrap(g, (1j * TWO_PI) * (g.k1 * u[0].coeffs + g.k2 * u[1].coeffs))


def curl(u: Velocity) -> SpectralField:
    """Scalar vorticity ``d1 u2 - d2 u1``."""
    g = u[0].grid
    return _wrap(g, (1j * TWO_PI) * (g.k1 * u[1].coeffs - g.k2 * u[0].coeffs))


def project_galerkin(f: SpectralField, N: float | None = None) -> SpectralField:
    """Orthogonal projection onto ``H_N = span{e^{2 pi i k.x} : 0 < |k| <= N}``.

    Falls back to the grid's ``galerkin_cutoff`` when ``N`` is omitted.
    """
    if N is None:
        N = f.grid.galerkin_cutoff
        if N is None:
            raise ValueError("no Galerkin cutoff given and the grid has none")
    if N < 1:
        raise ValueError(f"Galerkin cutoff must be >= 1, got {N}")
    return _wrap(f.grid, f.coeffs * f.grid.galerkin_mask(N))


def advect(u: Velocity, f: SpectralField, *, grad_f: Velocity | None = None) -> SpectralField:
    """Dealiased pseudo-spectral ``u . grad f``.

    ``grad_f`` may be passed in when the caller already holds it.
    """
    _check_grids(u[0], u[1], f)
    g = f.grid
    if grad_f is None:
        grad_f = gradient(f)
    n2 = g.n**2
    u1 = np.fft.ifft2(u[0].coeffs).real
    u2 = np.fft.ifft2(u[1].coeffs).real
    f1 = np.fft.ifft2(grad_f[0].coeffs).real
    f2 = np.fft.ifft2(grad_f[1].coeffs).real
    # the n^2 factors of the two inverse transforms and the forward 1/n^2 leave one n^2
    prod = np.fft.fft2(u1 * f1 + u2 * f2) * n2
    return SpectralField(g, prod * g.dealias_mask)


def physical_product(a: np.ndarray, b: np.ndarray, grid: WaveGrid) -> SpectralField:
    """Coefficients of the pointwise product of two physical-space arrays (no dealiasing)."""
    return SpectralField(grid, np.fft.fft2(a * b) / grid.n**2)
