"""
Ensemble studies: distance of Galerkin stochastic trajectories to the
deterministic viscous solution as the noise spreads over more modes, and the
gap between two independent ensembles at fixed noise.

Seeds: trajectory ``j`` of the ensemble for cutoff ``N`` uses
``split_seed(split_seed(master_seed, N), j)``.  Results are reduced in
trajectory order, so the worker count never changes them.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np
from scipy.stats import spearmanr

from . import __version__
from .analysis import NORM_CONVENTION, MeanAccumulator, x_distance
from .dynamics import SimParams, TrajectoryRecord, run_deterministic, run_stochastic
from .noise import GalerkinOverflowError, SigmaFamily, noise_ratio, sigma_example, split_seed, splitmix64
from .spectral import SpectralField

TABLE_COLUMNS = (
    "N",
    "beta",
    "noise_ratio",
    "M",
    "mean_x_distance",
    "std_x_distance",
    "exceedance_prob",
    "epsilon",
    "wall_time",
)


@dataclass(frozen=True)
class ExperimentRow:
    N: int
    beta: float
    noise_ratio: float
    M: int
    mean_x_distance: float
    std_x_distance: float
    exceedance_prob: float
    epsilon: float
    wall_time: float
    distances: tuple[float, ...] = field(default=(), repr=False)

    def exceedance(self, epsilon: float) -> float:
        """Fraction of trajectories whose distance to the limit exceeds ``epsilon``."""
        d = np.asarray(self.distances)
        return float(np.mean(d > epsilon)) if d.size else float("nan")

    def values(self) -> tuple:
        return tuple(getattr(self, c) for c in TABLE_COLUMNS)


@dataclass
class ExperimentTable:
    rows: list[ExperimentRow]
    metadata: dict

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: r.noise_ratio, reverse=True)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def spearman(self) -> float:
        """Rank correlation between noise ratio and mean distance over the rows."""
        if len(self.rows) < 2:
            return float("nan")
        rho = spearmanr(self.column("noise_ratio"), self.column("mean_x_distance")).statistic
        return float(rho)

    def inversions(self, *, within_stderr: bool = False) -> int:
        """Count adjacent rows (more noise modes downward) whose mean distance goes up.

        With ``within_stderr`` only increases larger than one standard error of
        the difference are counted.
        """
        count = 0
        for a, b in zip(self.rows, self.rows[1:]):
            rise = b.mean_x_distance - a.mean_x_distance
            if rise <= 0:
                continue
            if within_stderr:
                se = math.sqrt(a.std_x_distance**2 / a.M + b.std_x_distance**2 / b.M)
                if rise <= se:
                    continue
            count += 1
        return count


@dataclass(frozen=True)
class UniquenessSummary:
    N: int
    beta: float
    M: int
    mean_trajectory_gap: float
    distance_mean_gap: float
    mean_distance_a: float
    mean_distance_b: float
    seeds_a: tuple[int, ...]
    seeds_b: tuple[int, ...]


@dataclass(frozen=True)
class _Ensemble:
    theta0: SpectralField
    omega0: SpectralField
    params: SimParams
    reference: TrajectoryRecord
    zero_noise: bool
    keep_records: bool


def _run_member(ctx: _Ensemble, sigma: SigmaFamily, seed: int):
    rec = run_stochastic(ctx.theta0, ctx.omega0, ctx.params, sigma, seed, zero_noise=ctx.zero_noise)
    dist = x_distance(rec, ctx.reference).total
    return dist, (rec if ctx.keep_records else None)


def _map_members(ctx: _Ensemble, sigma: SigmaFamily, seeds: Sequence[int], workers: int | None):
    task = partial(_run_member, ctx, sigma)
    if workers is None or workers <= 1 or len(seeds) < 2:
        return [task(s) for s in seeds]
    chunk = max(1, math.ceil(len(seeds) / workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, seeds, chunksize=chunk))


def ensemble_seeds(master_seed: int, N: int, M: int) -> list[int]:
    stream = split_seed(master_seed, N)
    return [split_seed(stream, j) for j in range(M)]


def _check_capacity(params: SimParams, N_list: Sequence[int], beta: float, nu: float) -> None:
    extent = max(sigma_example(N, beta, nu).extent for N in N_list)
    if params.galerkin_N + extent >= params.n // 2:
        raise GalerkinOverflowError(
            f"grid too small for max N: n={params.n} must exceed 2*(galerkin_N + noise extent) = "
            f"{2 * (params.galerkin_N + extent)}"
        )


def no_noise_gap(theta0, omega0, params: SimParams, sigma: SigmaFamily, reference: TrajectoryRecord) -> float:
    """Distance between the zero-increment Galerkin run and the deterministic reference."""
    rec = run_stochastic(theta0, omega0, params, sigma, 0, zero_noise=True)
    return x_distance(rec, reference).total


def scaling_limit_study(
    theta0: SpectralField,
    omega0: SpectralField,
    params: SimParams,
    N_list: Sequence[int],
    beta: float,
    M: int,
    epsilon: float | None = None,
    master_seed: int = 0,
    *,
    workers: int | None = None,
    zero_noise: bool = False,
) -> ExperimentTable:
    """Run ``M`` trajectories per noise cutoff and tabulate their distances to the limit.

    The noise intensity is ``params.nu``.  When ``epsilon`` is omitted the
    exceedance threshold is twice the no-noise discretization gap, measured
    with the family of the largest ``N``.  ``zero_noise`` replaces every driver
    with zero increments (debug check).
    """
    if M < 10:
        raise ValueError(f"ensemble size M must be >= 10, got {M}")
    if not N_list:
        raise ValueError("N_list is empty")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    N_list = [int(N) for N in N_list]
    _check_capacity(params, N_list, beta, params.nu)

    reference = run_deterministic(theta0, omega0, params)
    gap = no_noise_gap(theta0, omega0, params, sigma_example(max(N_list), beta, params.nu), reference)
    eps = 2.0 * gap if epsilon is None else float(epsilon)
    ctx = _Ensemble(theta0, omega0, params, reference, zero_noise, keep_records=False)

    rows = []
    seeds_by_N = {}
    for N in N_list:
        sigma = sigma_example(N, beta, params.nu)
        seeds = ensemble_seeds(master_seed, N, M)
        seeds_by_N[str(N)] = seeds
        start = time.perf_counter()
        dists = np.array([d for d, _ in _map_members(ctx, sigma, seeds, workers)])
        rows.append(
            ExperimentRow(
                N=N,
                beta=float(beta),
                noise_ratio=noise_ratio(sigma),
                M=M,
                mean_x_distance=float(dists.mean()),
                std_x_distance=float(dists.std(ddof=1)),
                exceedance_prob=float(np.mean(dists > eps)),
                epsilon=eps,
                wall_time=time.perf_counter() - start,
                distances=tuple(float(d) for d in dists),
            )
        )
    metadata = {
        "params": params.to_dict(),
        "N_list": N_list,
        "beta": float(beta),
        "M": M,
        "master_seed": int(master_seed),
        "seeds": seeds_by_N,
        "epsilon": eps,
        "epsilon_default": epsilon is None,
        "no_noise_gap": gap,
        "zero_noise": zero_noise,
        "s_neg": params.s_neg,
        "norm_convention": NORM_CONVENTION,
        "version": __version__,
    }
    return ExperimentTable(rows, metadata)


def approximate_uniqueness_study(
    theta0: SpectralField,
    omega0: SpectralField,
    params: SimParams,
    N: int,
    beta: float,
    M: int,
    master_seed: int = 0,
    master_seed_b: int | None = None,
    *,
    workers: int | None = None,
) -> UniquenessSummary:
    """Compare two independent ensembles at one noise cutoff.

    Reports the X distance between the two empirical mean trajectories and the
    gap between the mean distances to the deterministic limit.  The second
    ensemble draws from ``master_seed_b`` (default: a stream derived from
    ``master_seed``); passing the same seed twice gives a gap of exactly zero.
    """
    if M < 2:
        raise ValueError("need at least two trajectories per ensemble")
    if master_seed_b is None:
        master_seed_b = splitmix64(master_seed ^ 0x5DEECE66D)
    _check_capacity(params, [N], beta, params.nu)
    sigma = sigma_example(N, beta, params.nu)
    reference = run_deterministic(theta0, omega0, params)
    ctx = _Ensemble(theta0, omega0, params, reference, False, keep_records=True)

    results = []
    seeds = []
    for master in (master_seed, master_seed_b):
        s = ensemble_seeds(master, N, M)
        acc = MeanAccumulator()
        dists = []
        for d, rec in _map_members(ctx, sigma, s, workers):
            dists.append(d)
            acc.add(rec)
        results.append((acc.result(), float(np.mean(dists))))
        seeds.append(tuple(s))
    (mean_a, da), (mean_b, db) = results
    return UniquenessSummary(
        N=int(N),
        beta=float(beta),
        M=M,
        mean_trajectory_gap=x_distance(mean_a, mean_b).total,
        distance_mean_gap=abs(da - db),
        mean_distance_a=da,
        mean_distance_b=db,
        seeds_a=seeds[0],
        seeds_b=seeds[1],
    )
