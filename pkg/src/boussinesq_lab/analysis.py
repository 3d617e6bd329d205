"""
Norms and trajectory functionals: Sobolev norms, the trajectory-space distance,
energy budgets, increment moments and the continuous-dependence check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import FlowState, TrajectoryRecord
from .spectral import TWO_PI, SpectralField

NORM_CONVENTION = (
    "total = max(theta_l2l2 + theta_sup_hneg, omega_sup_hneg); "
    "l2l2 by trapezoid over snapshot times, sup by max over snapshots"
)


def hs_norm(f: SpectralField, s: float) -> float:
    """``||f||_{H^s}^2 = sum_{k != 0} (2 pi |k|)^{2s} |f_k|^2``."""
    return float(np.sqrt(np.sum(_hs_weights(f, s) * np.abs(f.coeffs) ** 2)))


def _hs_weights(f: SpectralField, s: float) -> np.ndarray:
    ksq = f.grid.ksq
    lam = (TWO_PI**2) * np.where(ksq > 0, ksq, 1.0)
    return np.where(ksq > 0, lam ** float(s), 0.0)


def cumulative_trapezoid(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


@dataclass(frozen=True)
class XDistanceReport:
    theta_l2l2: float
    theta_sup_hneg: float
    omega_sup_hneg: float
    total: float
    s_neg: float
    resampled: bool = False
    convention: str = NORM_CONVENTION


def _aligned_snapshots(a: TrajectoryRecord, b: TrajectoryRecord):
    ta, tb = a.snapshot_times, b.snapshot_times
    scale = max(abs(ta[-1]), abs(tb[-1]), 1.0)
    if abs(ta[-1] - tb[-1]) > 1e-9 * scale or abs(ta[0] - tb[0]) > 1e-9 * scale:
        raise ValueError(f"horizon mismatch: [{ta[0]}, {ta[-1]}] vs [{tb[0]}, {tb[-1]}]")
    if len(ta) == len(tb) and np.allclose(ta, tb, rtol=0, atol=1e-9 * scale):
        return ta, a.snapshots, b.snapshots, False
    idx = np.abs(tb[None, :] - ta[:, None]).argmin(axis=1)
    return ta, a.snapshots, [b.snapshots[i] for i in idx], True


def x_distance(a: TrajectoryRecord, b: TrajectoryRecord, s_neg: float | None = None) -> XDistanceReport:
    """Distance of two trajectories in ``(L2(0,T;L2) n C(0,T;H^s)) x C(0,T;H^s)``.

    Snapshot times must coincide; otherwise ``b`` is resampled at the nearest
    snapshot and the report is flagged ``resampled``.
    """
    if s_neg is None:
        s_neg = a.params.s_neg
    if not s_neg < 0:
        raise ValueError("s_neg must be negative")
    times, sa, sb, resampled = _aligned_snapshots(a, b)
    w = _hs_weights(sa[0].theta, s_neg)
    th_l2 = np.empty(len(times))
    th_neg = np.empty(len(times))
    om_neg = np.empty(len(times))
    for i, (x, y) in enumerate(zip(sa, sb)):
        if x.theta.grid.n != y.theta.grid.n:
            raise ValueError("trajectories live on different grids")
        dth = np.abs(x.theta.coeffs - y.theta.coeffs) ** 2
        dom = np.abs(x.omega.coeffs - y.omega.coeffs) ** 2
        th_l2[i] = dth.sum()
        th_neg[i] = np.sqrt((w * dth).sum())
        om_neg[i] = np.sqrt((w * dom).sum())
    l2l2 = float(np.sqrt(cumulative_trapezoid(th_l2, times)[-1]))
    theta_part = l2l2 + float(th_neg.max())
    omega_part = float(om_neg.max())
    return XDistanceReport(l2l2, float(th_neg.max()), omega_part, max(theta_part, omega_part), s_neg, resampled)


@dataclass(frozen=True)
class EnergyBudget:
    times: np.ndarray
    theta_deficit: np.ndarray
    omega_excess: np.ndarray


def energy_budget(traj: TrajectoryRecord, kappa: float) -> EnergyBudget:
    """Pathwise a-priori balances along a run.

    ``theta_deficit = ||theta_0||^2 - ||theta_t||^2 - 2 kappa int_0^t ||grad theta||^2`` (should be >= 0)
    and ``omega_excess = ||omega_t|| - ||omega_0|| - int_0^t ||grad theta||`` (should be <= 0).
    """
    for name in ("times", "theta_l2", "theta_h1", "omega_l2"):
        v = getattr(traj, name, None)
        if v is None or len(v) == 0:
            raise ValueError(f"trajectory is missing the {name} series")
    t = traj.times
    deficit = traj.theta_l2[0] ** 2 - traj.theta_l2**2 - 2.0 * kappa * cumulative_trapezoid(traj.theta_h1**2, t)
    excess = traj.omega_l2 - traj.omega_l2[0] - cumulative_trapezoid(traj.theta_h1, t)
    return EnergyBudget(t, deficit, excess)


@dataclass(frozen=True)
class IncrementMomentFit:
    slope: float
    intercept: float
    lags: np.ndarray
    moments: np.ndarray


def _coefficient_history(rec: TrajectoryRecord, k: tuple[int, int]):
    if k in rec.mode_series and len(rec.mode_series[k]) == len(rec.times):
        return rec.times, rec.mode_series[k]
    snaps = rec.snapshots
    if not snaps:
        raise ValueError("trajectory has no snapshots")
    idx = snaps[0].theta.grid.index_of(k)
    return rec.snapshot_times, np.array([s.theta.coeffs[idx] for s in snaps])


def increment_moment(
    ensemble: Sequence[TrajectoryRecord],
    k: tuple[int, int],
    pairs: Sequence[tuple[float, float]],
) -> IncrementMomentFit:
    """Monte Carlo ``E|<theta_t - theta_s, f_k>|^4`` per pair and its log-log slope in ``t - s``.

    Uses probe series recorded for ``k`` when present, otherwise snapshots.
    """
    if len(ensemble) < 2:
        raise ValueError("need at least two trajectories")
    k = (int(k[0]), int(k[1]))
    ensemble[0].snapshots[0].theta.grid.index_of(k)  # raises if k is not on the grid
    lags, moments = [], []
    histories = [_coefficient_history(r, k) for r in ensemble]
    for s, t in pairs:
        if not t > s:
            raise ValueError(f"pair ({s}, {t}) must have t > s")
        vals = []
        for times, series in histories:
            i, j = _time_index(times, s), _time_index(times, t)
            vals.append(abs(series[j] - series[i]) ** 4)
        lags.append(t - s)
        moments.append(float(np.mean(vals)))
    lags = np.array(lags)
    moments = np.array(moments)
    good = moments > 0
    if good.sum() < 2:
        return IncrementMomentFit(float("nan"), float("nan"), lags, moments)
    slope, intercept = np.polyfit(np.log(lags[good]), np.log(moments[good]), 1)
    return IncrementMomentFit(float(slope), float(intercept), lags, moments)


def _time_index(times: np.ndarray, t: float) -> int:
    i = int(np.abs(times - t).argmin())
    if abs(times[i] - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"no sample at t={t}: insufficient snapshots")
    return i


@dataclass(frozen=True)
class GronwallReport:
    times: np.ndarray
    distance_sq: np.ndarray
    delta: float
    weight_integral: np.ndarray
    constant: float
    envelope: np.ndarray
    max_violation_ratio: float
    terminal_ratio: float
    minimal_constant: float


def _h1_sq_series(rec: TrajectoryRecord) -> np.ndarray:
    return 1.0 + rec.omega_h1**2 + rec.theta_h1**2


def gronwall_check(run1: TrajectoryRecord, run2: TrajectoryRecord) -> GronwallReport:
    """Compare ``||theta_1 - theta_2||^2 + ||omega_1 - omega_2||^2`` with ``delta^2 exp(C I(t))``.

    ``I(t) = int_0^t (1 + ||omega||_{H^1}^2 + ||theta||_{H^1}^2) ds`` uses the
    pointwise larger integrand of the two runs, so the check is symmetric.
    ``C`` is fitted at the first snapshot after t = 0 (clamped at 0) and held
    fixed; ``minimal_constant`` is the smallest C that bounds the whole run.
    """
    if run1.params != run2.params:
        raise ValueError("gronwall_check needs two runs with identical parameters")
    if len(run1.times) != len(run2.times):
        raise ValueError("runs have different step counts")
    times, s1, s2, _ = _aligned_snapshots(run1, run2)
    dist = np.array(
        [
            np.sum(np.abs(a.theta.coeffs - b.theta.coeffs) ** 2) + np.sum(np.abs(a.omega.coeffs - b.omega.coeffs) ** 2)
            for a, b in zip(s1, s2)
        ]
    )
    weight = np.maximum(_h1_sq_series(run1), _h1_sq_series(run2))
    integral_all = cumulative_trapezoid(weight, run1.times)
    integral = np.interp(times, run1.times, integral_all)
    d0 = float(dist[0])
    delta = float(np.sqrt(d0))
    if d0 == 0.0:
        zeros = np.zeros_like(dist)
        ratio = np.inf if dist.max() > 0 else 0.0
        return GronwallReport(times, dist, 0.0, integral, 0.0, zeros, ratio, ratio, 0.0)
    logs = np.log(np.maximum(dist[1:], np.finfo(float).tiny) / d0) / integral[1:]
    constant = max(float(logs[0]), 0.0) if len(logs) else 0.0
    envelope = d0 * np.exp(constant * integral)
    return GronwallReport(
        times=times,
        distance_sq=dist,
        delta=delta,
        weight_integral=integral,
        constant=constant,
        envelope=envelope,
        max_violation_ratio=float(np.max(dist / envelope)),
        terminal_ratio=float(np.sqrt(dist[-1]) / delta),
        minimal_constant=max(float(logs.max()), 0.0) if len(logs) else 0.0,
    )


def mean_trajectory(records: Sequence[TrajectoryRecord]) -> TrajectoryRecord:
    """Ensemble average of snapshot fields (norm series are averaged too)."""
    if not records:
        raise ValueError("empty ensemble")
    acc = MeanAccumulator()
    for r in records:
        acc.add(r)
    return acc.result()


class MeanAccumulator:
    """Running sum of snapshot fields so ensembles need not be held in memory."""

    def __init__(self):
        self.count = 0
        self._theta = None
        self._omega = None
        self._template: TrajectoryRecord | None = None

    def add(self, rec: TrajectoryRecord) -> None:
        th = np.stack([s.theta.coeffs for s in rec.snapshots])
        om = np.stack([s.omega.coeffs for s in rec.snapshots])
        if self._theta is None:
            self._theta, self._omega, self._template = th.copy(), om.copy(), rec
        else:
            if th.shape != self._theta.shape:
                raise ValueError("ensemble members have different snapshot layouts")
            self._theta += th
            self._omega += om
        self.count += 1

    def result(self) -> TrajectoryRecord:
        tpl = self._template
        if tpl is None:
            raise ValueError("empty ensemble")
        snaps = [
            FlowState(
                SpectralField(s.theta.grid, self._theta[i] / self.count, trusted=True),
                SpectralField(s.omega.grid, self._omega[i] / self.count, trusted=True),
                s.t,
            )
            for i, s in enumerate(tpl.snapshots)
        ]
        nan = np.full_like(tpl.times, np.nan)
        return TrajectoryRecord(tpl.times, nan, nan, nan, nan, nan, snaps, tpl.params, None)
