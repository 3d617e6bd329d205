"""
Command-line front end.

Every subcommand accepts ``--config FILE`` (JSON; either a flat mapping of
option names or a ``metadata.json`` written by a previous run, whose
``"config"`` entry is used).  Flags given on the command line override the file.

Exit codes: 0 success, 1 invalid usage or configuration, 2 runtime failure
(including failed invariant checks).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import energy_budget
from .dynamics import SimParams, run_deterministic, run_stochastic
from .experiments import TABLE_COLUMNS, scaling_limit_study
from .noise import GalerkinOverflowError, covariance_origin, ito_correction, noise_term, sigma_example
from .persistence import read_snapshot, write_series_csv, write_snapshot
from .presets import PRESETS, initial_condition
from .spectral import SpectralField, WaveGrid, advect, biot_savart, curl, gradient

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    def __init__(self, message: str, parser: argparse.ArgumentParser | None = None):
        super().__init__(message)
        self.parser = parser


@dataclass
class RunConfig:
    kappa: float = 1.0
    nu: float = 1.0
    T: float = 0.1
    dt: float = 1e-3
    n: int | None = None
    galerkin_N: int | None = None
    record_stride: int = 10
    s_neg: float = -3.0
    eps_kernel: float = 1.0
    preset: str | None = None
    snapshot: str | None = None
    out: str | None = None
    seed: int = 0
    N: int | None = None
    beta: float = 0.0
    N_list: list[int] | None = None
    M: int = 20
    epsilon: float | None = None
    workers: int | None = None
    zero_noise: bool = False

    DEFAULT_N = 32

    def grid_size(self) -> int:
        return self.n if self.n is not None else self.DEFAULT_N

    def sim_params(self) -> SimParams:
        return SimParams(
            kappa=self.kappa,
            nu=self.nu,
            T=self.T,
            dt=self.dt,
            n=self.grid_size(),
            galerkin_N=self.galerkin_N,
            record_stride=self.record_stride,
            s_neg=self.s_neg,
            eps_kernel=self.eps_kernel,
        )

    def to_dict(self) -> dict:
        return asdict(self)


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}", self)


def _sim_options(p: argparse.ArgumentParser, *, initial: bool = True) -> None:
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--kappa", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("-T", "--T", dest="T", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--n", type=int, help="grid points per axis")
    p.add_argument("--galerkin-N", dest="galerkin_N", type=int)
    p.add_argument("--record-stride", dest="record_stride", type=int)
    p.add_argument("--s-neg", dest="s_neg", type=float)
    p.add_argument("--eps-kernel", dest="eps_kernel", type=float)
    p.add_argument("--out", help="output directory")
    if initial:
        p.add_argument("--preset", choices=PRESETS)
        p.add_argument("--snapshot", help="initial data from a snapshot file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="boussinesq-lab", description="Stochastic Boussinesq simulation laboratory")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    parser.commands = sub.choices

    p = sub.add_parser("simulate-det", help="deterministic viscous run")
    _sim_options(p)

    p = sub.add_parser("simulate-sde", help="one Galerkin stochastic trajectory")
    _sim_options(p)
    p.add_argument("--N", type=int, help="noise cutoff of sigma_example")
    p.add_argument("--beta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--zero-noise", dest="zero_noise", action="store_true", default=None)

    p = sub.add_parser("scaling-limit", help="ensemble distance to the deterministic limit")
    _sim_options(p)
    p.add_argument("--N-list", dest="N_list", type=_int_list, help="comma separated cutoffs, e.g. 1,2,4,8")
    p.add_argument("--beta", type=float)
    p.add_argument("--M", type=int, help="trajectories per cutoff")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--workers", type=int)
    p.add_argument("--zero-noise", dest="zero_noise", action="store_true", default=None)

    p = sub.add_parser("check-invariants", help="run identity and bound checks on one configuration")
    _sim_options(p)
    p.add_argument("--N", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("covariance", help="print the noise covariance at the origin")
    p.add_argument("--config")
    p.add_argument("--N", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--nu", type=float)
    return parser


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None


def load_config_file(path) -> dict:
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict) and isinstance(data.get("config"), dict):
        data = data["config"]
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(ns, "config", None):
        values.update(load_config_file(ns.config))
    for key, v in vars(ns).items():
        if key in _CONFIG_KEYS and v is not None:
            values[key] = v
    return RunConfig(**values)


def _require(cfg: RunConfig, *names: str) -> None:
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _initial_data(cfg: RunConfig):
    if (cfg.preset is None) == (cfg.snapshot is None):
        raise UsageError("give exactly one of --preset or --snapshot")
    if cfg.snapshot is not None:
        theta, omega = read_snapshot(cfg.snapshot)
        if cfg.n is not None and cfg.n != theta.grid.n:
            raise ValueError(f"--n {cfg.n} disagrees with the snapshot grid n={theta.grid.n}")
        cfg.n = theta.grid.n
        return theta, omega
    return initial_condition(cfg.preset, cfg.grid_size())


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out if cfg.out is not None else ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_metadata(out: Path, command: str, cfg: RunConfig, extra: dict | None = None) -> None:
    meta = {
        "command": command,
        "config": cfg.to_dict(),
        "version": __version__,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    meta.update(extra or {})
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _cmd_simulate_det(cfg: RunConfig):
    theta0, omega0 = _initial_data(cfg)
    params = cfg.sim_params()

    def run():
        out = _out_dir(cfg)
        rec = run_deterministic(theta0, omega0, params)
        write_series_csv(rec, out / "series.csv")
        final = rec.snapshots[-1]
        write_snapshot(final.theta, final.omega, out / "final.bq2d")
        _write_metadata(out, "simulate-det", cfg, {"seeds": {}})
        print(f"t={rec.times[-1]:.6g} theta_l2={rec.theta_l2[-1]:.12e} omega_l2={rec.omega_l2[-1]:.12e}")

    return run


def _cmd_simulate_sde(cfg: RunConfig):
    _require(cfg, "N")
    theta0, omega0 = _initial_data(cfg)
    params = cfg.sim_params()
    sigma = sigma_example(cfg.N, cfg.beta, cfg.nu)
    if params.galerkin_N + sigma.extent >= params.n // 2:
        raise GalerkinOverflowError(f"grid too small: n={params.n} must exceed 2*(galerkin_N + N)")

    def run():
        out = _out_dir(cfg)
        rec = run_stochastic(theta0, omega0, params, sigma, cfg.seed, zero_noise=cfg.zero_noise)
        write_series_csv(rec, out / "series.csv")
        final = rec.snapshots[-1]
        write_snapshot(final.theta, final.omega, out / "final.bq2d")
        _write_metadata(out, "simulate-sde", cfg, {"seeds": {"trajectory": cfg.seed}})
        print(f"t={rec.times[-1]:.6g} theta_l2={rec.theta_l2[-1]:.12e} omega_l2={rec.omega_l2[-1]:.12e}")

    return run


def _cmd_scaling_limit(cfg: RunConfig):
    _require(cfg, "N_list")
    theta0, omega0 = _initial_data(cfg)
    params = cfg.sim_params()
    if cfg.M < 10:
        raise ValueError("--M must be >= 10")
    extent = max(sigma_example(N, cfg.beta, cfg.nu).extent for N in cfg.N_list)
    if params.galerkin_N + extent >= params.n // 2:
        raise GalerkinOverflowError(f"grid too small for max N: n={params.n}")

    def run():
        out = _out_dir(cfg)
        table = scaling_limit_study(
            theta0,
            omega0,
            params,
            cfg.N_list,
            cfg.beta,
            cfg.M,
            cfg.epsilon,
            cfg.seed,
            workers=cfg.workers,
            zero_noise=cfg.zero_noise,
        )
        with open(out / "table.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TABLE_COLUMNS)
            for row in table.rows:
                w.writerow([_fmt(v) for v in row.values()])
        meta = dict(table.metadata)
        meta["distances"] = {str(r.N): list(r.distances) for r in table.rows}
        _write_metadata(out, "scaling-limit", cfg, {"study": meta, "seeds": meta["seeds"]})
        for row in table.rows:
            print(
                f"N={row.N} ratio={row.noise_ratio:.4f} mean={row.mean_x_distance:.6e} "
                f"std={row.std_x_distance:.3e} exceed={row.exceedance_prob:.2f}"
            )

    return run


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def _cmd_covariance(cfg: RunConfig):
    _require(cfg, "N")
    sigma = sigma_example(cfg.N, cfg.beta, cfg.nu)

    def run():
        q = covariance_origin(sigma)
        for row in q:
            print(" ".join(f"{v: .17e}" for v in row))

    return run


def _cmd_check_invariants(cfg: RunConfig):
    if cfg.preset is None and cfg.snapshot is None:
        cfg.preset = "two-mode"
    if cfg.N is None:
        cfg.N = 2
    theta0, omega0 = _initial_data(cfg)
    params = cfg.sim_params()
    sigma = sigma_example(cfg.N, cfg.beta, cfg.nu)
    if params.galerkin_N + sigma.extent >= params.n // 2:
        raise GalerkinOverflowError(f"grid too small: n={params.n} must exceed 2*(galerkin_N + N)")

    def run():
        results = run_invariant_checks(theta0, omega0, params, sigma, cfg.seed)
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        if not all(ok for _, ok, _ in results):
            raise RuntimeError("invariant check failed")

    return run


def run_invariant_checks(theta0, omega0, params: SimParams, sigma, seed: int) -> list[tuple[str, bool, str]]:
    """Identity and bound checks on one configured instance; returns ``(name, ok, detail)`` rows."""
    res = []
    q = covariance_origin(sigma)
    err = float(np.abs(q - sigma.nu * np.eye(2)).max())
    res.append(("covariance", err < 1e-12, f"max |Q - nu I| = {err:.2e}"))

    grid = WaveGrid(params.n)
    roomy = SpectralField(grid, theta0.coeffs * grid.galerkin_mask(grid.n // 2 - sigma.extent - 1), trusted=True)
    lhs = ito_correction(roomy, sigma)
    g = gradient(roomy)
    rhs = 2 * sigma.nu * (g[0].l2_norm() ** 2 + g[1].l2_norm() ** 2)
    rel = abs(lhs - rhs) / max(rhs, 1e-300)
    res.append(("ito-correction", rel < 1e-10 or rhs == 0, f"relative gap {rel:.2e}"))

    proj = ito_correction(roomy, sigma, params.galerkin_N)
    res.append(("ito-projected", proj <= rhs * (1 + 1e-12), f"{proj:.6e} <= {rhs:.6e}"))

    inc = np.ones(len(sigma.positive_modes), np.complex128)
    pairing = noise_term(roomy, sigma, inc).inner(roomy)
    res.append(("noise-energy", abs(pairing) < 1e-12 * max(1.0, roomy.l2_norm() ** 2), f"<noise, f> = {pairing:.2e}"))

    u = biot_savart(omega0)
    diff = (curl(u) - omega0).l2_norm()
    res.append(("biot-savart", diff <= 1e-13 * max(1.0, omega0.l2_norm()), f"||curl K w - w|| = {diff:.2e}"))

    adv = advect(u, theta0).inner(theta0)
    res.append(("advect-energy", abs(adv) < 1e-12 * max(1.0, theta0.l2_norm() ** 2), f"<u.grad f, f> = {adv:.2e}"))

    det = run_deterministic(theta0, omega0, params)
    rise = float(np.max(np.diff(det.theta_l2), initial=0.0))
    res.append(("theta-decay", rise <= 1e-10, f"max step increase of ||theta|| = {rise:.2e}"))

    sto = run_stochastic(theta0, omega0, params, sigma, seed)
    bud = energy_budget(sto, params.kappa)
    tol = params.dt * max(sto.theta_l2[0] ** 2, 1e-300)
    res.append(("pathwise-theta", bud.theta_deficit.min() >= -tol, f"min deficit {bud.theta_deficit.min():.3e}, tol {tol:.1e}"))
    tol_w = params.dt * max(sto.omega_l2[0], sto.theta_h1.max(), 1e-300)
    res.append(("pathwise-omega", bud.omega_excess.max() <= tol_w, f"max excess {bud.omega_excess.max():.3e}, tol {tol_w:.1e}"))
    return res


_COMMANDS = {
    "simulate-det": _cmd_simulate_det,
    "simulate-sde": _cmd_simulate_sde,
    "scaling-limit": _cmd_scaling_limit,
    "check-invariants": _cmd_check_invariants,
    "covariance": _cmd_covariance,
}


def main(argv=None) -> int:
    parser = build_parser()
    ns = None
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise UsageError("a subcommand is required", parser)
        cfg = resolve_config(ns)
        run = _COMMANDS[ns.command](cfg)
    except UsageError as exc:
        shown = exc.parser or parser.commands.get(getattr(ns, "command", None), parser)
        shown.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, TypeError, OSError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        run()
    except Exception as exc:  # noqa: BLE001 - every solver failure maps to one exit code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
