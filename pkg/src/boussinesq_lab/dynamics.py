"""
Time integration of the deterministic viscous Boussinesq system and of the
Galerkin-truncated stochastic system in Ito form.

Deterministic (limit) system::

    d theta = [-u.grad theta + (kappa + nu) lap theta] dt
    d omega = [-u.grad omega + d1 theta + nu lap omega] dt,   u = K * omega

The stochastic system adds ``Pi_N`` of the transport noise to both equations and
projects the advection onto ``H_N``.  The Laplacian parts are integrated exactly
with exponential factors; the rest uses explicit midpoint (deterministic) or
Euler-Maruyama (stochastic).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .noise import BrownianDriver, GalerkinOverflowError, NoiseOperator, SigmaFamily, ZeroDriver
from .spectral import (
    TWO_PI,
    SpectralField,
    WaveGrid,
    advect,
    biot_savart,
    biot_savart_eps,
    gradient,
)


class AdvectiveCFLWarning(RuntimeWarning):
    """``dt * max|u| * n > 1``: the explicit advection step is under-resolved."""


@dataclass(frozen=True)
class SimParams:
    kappa: float
    nu: float
    T: float
    dt: float
    n: int
    galerkin_N: int | None = None
    record_stride: int = 10
    s_neg: float = -3.0
    eps_kernel: float = 1.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be > 0 (zero diffusivity is not supported), got {self.kappa}")
        if not self.nu > 0:
            raise ValueError(f"nu must be > 0, got {self.nu}")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.T >= self.dt:
            raise ValueError(f"horizon T={self.T} must be >= dt={self.dt}")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(steps, 1.0):
            raise ValueError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if not self.s_neg < 0:
            raise ValueError(f"s_neg must be negative, got {self.s_neg}")
        if not 0 < self.eps_kernel <= 1:
            raise ValueError(f"eps_kernel must lie in (0, 1], got {self.eps_kernel}")
        WaveGrid(self.n)  # validates n
        if self.galerkin_N is None:
            object.__setattr__(self, "galerkin_N", (self.n - 1) // 3)
        if self.galerkin_N < 1 or 3 * self.galerkin_N >= self.n:
            raise ValueError(f"need 1 <= galerkin_N and n > 3*galerkin_N, got N={self.galerkin_N}, n={self.n}")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    def with_dt(self, dt: float) -> "SimParams":
        return replace(self, dt=dt)

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "nu": self.nu,
            "T": self.T,
            "dt": self.dt,
            "n": self.n,
            "galerkin_N": self.galerkin_N,
            "record_stride": self.record_stride,
            "s_neg": self.s_neg,
            "eps_kernel": self.eps_kernel,
        }


@dataclass
class FlowState:
    theta: SpectralField
    omega: SpectralField
    t: float = 0.0

    def __post_init__(self):
        if self.theta.grid.n != self.omega.grid.n:
            raise ValueError("theta and omega must share one grid")

    @property
    def grid(self) -> WaveGrid:
        return self.theta.grid


@dataclass
class TrajectoryRecord:
    """Per-step norm series plus strided field snapshots of one run.

    ``mode_series`` optionally holds every-step coefficient histories of probe
    modes, keyed by ``(k1, k2)``.
    """

    times: np.ndarray
    theta_l2: np.ndarray
    theta_h1: np.ndarray
    omega_l2: np.ndarray
    omega_h1: np.ndarray
    omega_hneg: np.ndarray
    snapshots: list[FlowState]
    params: SimParams
    seed: int | None = None
    mode_series: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    @property
    def snapshot_times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])


def velocity(omega: SpectralField, eps_kernel: float = 1.0):
    if eps_kernel == 1.0:
        return biot_savart(omega)
    return biot_savart_eps(omega, eps_kernel)


@lru_cache(maxsize=64)
def _decay_factors(n: int, rate_theta: float, rate_omega: float, h: float):
    ksq = WaveGrid(n).ksq
    lam = (TWO_PI**2) * ksq * h
    et = np.exp(-rate_theta * lam)
    eo = np.exp(-rate_omega * lam)
    et.setflags(write=False)
    eo.setflags(write=False)
    return et, eo


def _nonlinear(theta: SpectralField, omega: SpectralField, eps_kernel: float, galerkin_N: int | None = None):
    """Non-stiff tendencies ``(-u.grad theta, -u.grad omega + d1 theta)`` and ``max|u|``."""
    u = velocity(omega, eps_kernel)
    gt = gradient(theta)
    nt = -advect(u, theta, grad_f=gt)
    no = -advect(u, omega)
    if galerkin_N is not None:
        mask = theta.grid.galerkin_mask(galerkin_N)
        nt = SpectralField(theta.grid, nt.coeffs * mask, trusted=True)
        no = SpectralField(theta.grid, no.coeffs * mask, trusted=True)
    no = no + gt[0]
    return nt, no, u


def _max_speed(u) -> float:
    u1 = u[0].to_physical()
    u2 = u[1].to_physical()
    return float(np.sqrt(np.max(u1**2 + u2**2)))


def _cfl_guard(u, params: SimParams) -> None:
    if params.dt * _max_speed(u) * params.n > 1.0:
        warnings.warn("advective CFL exceeded", AdvectiveCFLWarning, stacklevel=3)


def deterministic_rhs(state: FlowState, params: SimParams) -> tuple[SpectralField, SpectralField]:
    """Full right-hand side of the viscous limit system."""
    g = state.grid
    nt, no, _ = _nonlinear(state.theta, state.omega, params.eps_kernel)
    lap = -(TWO_PI**2) * g.ksq
    dtheta = nt + SpectralField(g, (params.kappa + params.nu) * lap * state.theta.coeffs, trusted=True)
    domega = no + SpectralField(g, params.nu * lap * state.omega.coeffs, trusted=True)
    return dtheta, domega


def step_deterministic(state: FlowState, params: SimParams, *, check_cfl: bool = True) -> FlowState:
    """Integrating-factor explicit midpoint step of length ``params.dt``."""
    g = state.grid
    dt = params.dt
    rt, ro = params.kappa + params.nu, params.nu
    et, eo = _decay_factors(g.n, rt, ro, dt)
    eth, eoh = _decay_factors(g.n, rt, ro, 0.5 * dt)
    th, om = state.theta.coeffs, state.omega.coeffs

    nt, no, u = _nonlinear(state.theta, state.omega, params.eps_kernel)
    if check_cfl:
        _cfl_guard(u, params)
    th_half = SpectralField(g, eth * (th + 0.5 * dt * nt.coeffs), trusted=True)
    om_half = SpectralField(g, eoh * (om + 0.5 * dt * no.coeffs), trusted=True)
    nt2, no2, _ = _nonlinear(th_half, om_half, params.eps_kernel)
    th_new = et * th + dt * eth * nt2.coeffs
    om_new = eo * om + dt * eoh * no2.coeffs
    return FlowState(
        SpectralField(g, th_new, trusted=True),
        SpectralField(g, om_new, trusted=True),
        state.t + dt,
    )


def drift_step(state: FlowState, params: SimParams) -> FlowState:
    """Integrating-factor Euler step of the projected drift alone (stochastic step with zero noise)."""
    return _em_step(state, params, None, None)


def _em_step(
    state: FlowState,
    params: SimParams,
    op: NoiseOperator | None,
    increments: np.ndarray | None,
) -> FlowState:
    g = state.grid
    dt = params.dt
    N = params.galerkin_N
    et, eo = _decay_factors(g.n, params.kappa + params.nu, params.nu, dt)
    mask = g.galerkin_mask(N)
    nt, no, _ = _nonlinear(state.theta, state.omega, params.eps_kernel, N)
    th = state.theta.coeffs + dt * nt.coeffs
    om = state.omega.coeffs + dt * no.coeffs
    if op is not None and increments is not None and np.any(increments):
        eta = op.velocity(increments)
        th = th + op.apply(state.theta, increments, eta=eta, check=False).coeffs * mask
        om = om + op.apply(state.omega, increments, eta=eta, check=False).coeffs * mask
    return FlowState(
        SpectralField(g, et * th * mask, trusted=True),
        SpectralField(g, eo * om * mask, trusted=True),
        state.t + dt,
    )


def step_stochastic(
    state: FlowState,
    params: SimParams,
    sigma: SigmaFamily,
    driver: BrownianDriver,
    *,
    noise_op: NoiseOperator | None = None,
) -> FlowState:
    """One exponential Euler-Maruyama step of the Galerkin system in Ito form.

    ``state`` must already lie in ``H_N``; the result is projected onto it again.
    """
    if noise_op is None:
        noise_op = _noise_operator(sigma, state.grid, params.galerkin_N)
    increments = driver.sample_increments(params.dt)
    return _em_step(state, params, noise_op, increments)


def _noise_operator(sigma: SigmaFamily, grid: WaveGrid, galerkin_N: int) -> NoiseOperator:
    op = NoiseOperator(sigma, grid)
    if galerkin_N + sigma.extent >= grid.n // 2:
        raise GalerkinOverflowError(
            f"galerkin overflow: n={grid.n} cannot hold H_N (N={galerkin_N}) shifted by the "
            f"noise support (extent {sigma.extent}); need n > 2*(N + extent)"
        )
    return op


class _Recorder:
    def __init__(self, params: SimParams, probes=()):
        self.params = params
        self.rows: list[tuple[float, ...]] = []
        self.snapshots: list[FlowState] = []
        self.probes = [tuple(int(v) for v in k) for k in probes]
        self.probe_values: dict[tuple[int, int], list[complex]] = {k: [] for k in self.probes}
        self._weights = None

    def __call__(self, state: FlowState, step: int, last: bool) -> None:
        g = state.grid
        if self._weights is None:
            ksq = g.ksq
            w1 = (TWO_PI**2) * ksq
            with np.errstate(divide="ignore"):
                wneg = np.where(ksq > 0, (w1 + (ksq == 0)) ** self.params.s_neg, 0.0)
            self._weights = (w1, wneg)
            self._probe_idx = [g.index_of(k) for k in self.probes]
        w1, wneg = self._weights
        pt = state.theta.coeffs.real ** 2 + state.theta.coeffs.imag ** 2
        po = state.omega.coeffs.real ** 2 + state.omega.coeffs.imag ** 2
        self.rows.append(
            (
                state.t,
                np.sqrt(pt.sum()),
                np.sqrt((w1 * pt).sum()),
                np.sqrt(po.sum()),
                np.sqrt((w1 * po).sum()),
                np.sqrt((wneg * po).sum()),
            )
        )
        for k, idx in zip(self.probes, self._probe_idx):
            self.probe_values[k].append(complex(state.theta.coeffs[idx]))
        if step % self.params.record_stride == 0 or last:
            self.snapshots.append(state)

    def finish(self, seed: int | None) -> TrajectoryRecord:
        a = np.array(self.rows)
        return TrajectoryRecord(
            times=a[:, 0],
            theta_l2=a[:, 1],
            theta_h1=a[:, 2],
            omega_l2=a[:, 3],
            omega_h1=a[:, 4],
            omega_hneg=a[:, 5],
            snapshots=self.snapshots,
            params=self.params,
            seed=seed,
            mode_series={k: np.array(v) for k, v in self.probe_values.items()},
        )


def _check_initial(theta0: SpectralField, omega0: SpectralField, params: SimParams) -> None:
    if theta0.grid.n != params.n or omega0.grid.n != params.n:
        raise ValueError(f"initial data live on n={theta0.grid.n}/{omega0.grid.n}, params say n={params.n}")


def run_deterministic(
    theta0: SpectralField,
    omega0: SpectralField,
    params: SimParams,
    *,
    probes=(),
) -> TrajectoryRecord:
    """Integrate the viscous limit system on the full (dealiased) grid up to ``params.T``."""
    _check_initial(theta0, omega0, params)
    grid = WaveGrid(params.n)
    state = FlowState(SpectralField(grid, theta0.coeffs, trusted=True), SpectralField(grid, omega0.coeffs, trusted=True), 0.0)
    rec = _Recorder(params, probes)
    steps = params.steps
    rec(state, 0, steps == 0)
    for i in range(1, steps + 1):
        state = step_deterministic(state, params)
        state.t = i * params.dt
        rec(state, i, i == steps)
    return rec.finish(None)


def run_stochastic(
    theta0: SpectralField,
    omega0: SpectralField,
    params: SimParams,
    sigma: SigmaFamily,
    seed: int,
    *,
    substeps: int = 1,
    zero_noise: bool = False,
    probes=(),
) -> TrajectoryRecord:
    """Integrate the Galerkin stochastic system from ``(Pi_N theta0, Pi_N omega0)``.

    ``substeps`` > 1 drives the run with sums of finer Brownian increments so
    that runs at ``dt`` and ``dt / substeps`` share one Brownian path.
    ``zero_noise`` replaces the driver by :class:`ZeroDriver`.
    """
    _check_initial(theta0, omega0, params)
    grid = WaveGrid(params.n, params.galerkin_N)
    mask = grid.galerkin_mask(params.galerkin_N)
    state = FlowState(
        SpectralField(grid, theta0.coeffs * mask, trusted=True),
        SpectralField(grid, omega0.coeffs * mask, trusted=True),
        0.0,
    )
    op = _noise_operator(sigma, grid, params.galerkin_N)
    driver_cls = ZeroDriver if zero_noise else BrownianDriver
    driver = driver_cls.for_sigma(sigma, seed, substeps)
    rec = _Recorder(params, probes)
    steps = params.steps
    rec(state, 0, steps == 0)
    for i in range(1, steps + 1):
        state = _em_step(state, params, op, driver.sample_increments(params.dt))
        state.t = i * params.dt
        rec(state, i, i == steps)
    return rec.finish(seed)
