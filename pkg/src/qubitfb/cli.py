"""Command-line runner: simulate | ensemble | sweep | optimize | fit | check.

Configuration comes from a flat ``key = value`` file (``#`` starts a comment)
and ``--key value`` flags; flags win. Every run writes its CSV artifacts and
``manifest.json`` (resolved config, version, seed, wall time, config hash)
into ``output``. ``--from-manifest`` replays a previous run.

Exit codes: 0 success, 1 a ``check`` invariant failed, 2 invalid
configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import sys
import time
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

from . import __version__
from .bloch import BlochVector, PolarState, thermal_equilibrium, to_polar
from .ensemble import append_results, burn_in_heuristic, estimate_steady_error, result_row, trajectory_rng
from .params import ParamError, SimParams
from .policy import ControlPolicy, ProtocolCoefficients, PublishedProtocol, table_row
from .sme import IntegrationError, simulate_trajectory

MODES = ("simulate", "ensemble", "sweep", "optimize", "fit", "check")
PROTOCOLS = ("published", "aligned", "law")
# keys that do not change numeric artifacts and stay out of the config hash
UNHASHED = ("workers", "output")


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def _opt_int(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else int(text)


@dataclass
class RunConfig:
    mode: str = "ensemble"
    k: float = 1.0
    gamma: float = 0.1
    nT: float = 0.1
    omega: str = ""
    dt: float = 1e-4
    t_burn: float | None = None
    t_avg: float = 20.0
    scheme: str = "euler"
    n_traj: int = 12800
    seed: int = 0
    workers: int | None = None
    output: str = "runs"
    protocol: str = "published"
    c0: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0
    table_gamma: float | None = None
    switch_ratio: float = 45.0
    feedback: bool = True
    clamp: bool = True
    initial: str = ""
    stride: int = 100
    degree: int = 1
    budget: int = 40
    freeze_c0: bool = False
    fd_step: float = 1e-2
    n_traj_final: int | None = None
    half_pi_t_avg: float | None = None
    half_pi_n_traj: int | None = None
    input: str = ""

    def resolved(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def config_hash(self) -> str:
        data = {k: v for k, v in self.resolved().items() if k not in UNHASHED}
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:16]


def _parser_for(f: dataclasses.Field):
    t = str(f.type)
    if "bool" in t:
        return _bool
    if t.startswith("float |"):
        return _opt_float
    if t.startswith("int |"):
        return _opt_int
    if "float" in t:
        return float
    if "int" in t:
        return int
    return str


FIELD_PARSERS = {f.name: _parser_for(f) for f in fields(RunConfig)}


def read_config_file(path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}", f"expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def build_config(raw: dict) -> RunConfig:
    """Parse and validate raw (string or already-typed) values by field."""
    values = {}
    for key, value in raw.items():
        if key not in FIELD_PARSERS:
            raise ConfigError(key, "unknown key")
        if isinstance(value, str):
            try:
                value = FIELD_PARSERS[key](value)
            except ValueError as exc:
                raise ConfigError(key, str(exc)) from None
        values[key] = value
    cfg = RunConfig(**values)
    if cfg.mode not in MODES:
        raise ConfigError("mode", f"expected one of {MODES}, got {cfg.mode!r}")
    if cfg.protocol not in PROTOCOLS:
        raise ConfigError("protocol", f"expected one of {PROTOCOLS}, got {cfg.protocol!r}")
    for name in ("n_traj", "stride", "budget"):
        if getattr(cfg, name) < 1:
            raise ConfigError(name, "must be positive")
    if cfg.degree not in (1, 3):
        raise ConfigError("degree", "must be 1 or 3")
    if cfg.mode in ("simulate", "ensemble", "sweep", "optimize") and not cfg.omega.strip():
        raise ConfigError("omega", f"required in {cfg.mode} mode")
    if cfg.mode == "fit" and not cfg.input:
        raise ConfigError("input", "fit mode needs a CSV of omega_over_k,c1 points")
    if cfg.omega.strip():
        omegas(cfg)
    return cfg


def omegas(cfg: RunConfig) -> list[float]:
    try:
        values = [float(v) for v in cfg.omega.replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError("omega", str(exc)) from None
    if not values:
        raise ConfigError("omega", "empty")
    return values


def sim_params(cfg: RunConfig, omega: float) -> SimParams:
    try:
        base = SimParams(k=cfg.k, gamma=cfg.gamma, nT=cfg.nT, omega=omega, dt=cfg.dt, t_burn=0.0,
                         t_avg=cfg.t_avg, seed=cfg.seed, scheme=cfg.scheme)
        t_burn = burn_in_heuristic(base, cfg.t_burn)
        return base.replace(t_burn=t_burn)
    except ParamError as exc:
        raise ConfigError(exc.field, str(exc)) from None
    except ValueError as exc:
        raise ConfigError("t_burn", str(exc)) from None


def protocol_table(cfg: RunConfig) -> PublishedProtocol:
    key = cfg.gamma / cfg.k if cfg.table_gamma is None else cfg.table_gamma
    try:
        row = table_row(key)
        return dataclasses.replace(row, switch_ratio=cfg.switch_ratio)
    except KeyError:
        raise ConfigError("table_gamma", f"no tabulated protocol for gamma/k={key!r}; "
                                         "use protocol = law or run the optimizer") from None
    except ValueError as exc:
        raise ConfigError("switch_ratio", str(exc)) from None


def make_policy(cfg: RunConfig, omega: float) -> ControlPolicy:
    kw = {"feedback": cfg.feedback, "clamp": cfg.clamp}
    if cfg.protocol == "aligned":
        return ControlPolicy.aligned(**kw)
    if cfg.protocol == "published":
        return ControlPolicy.published(omega, cfg.k, protocol_table(cfg), **kw)
    try:
        return ControlPolicy.law(cfg.c0, cfg.c1, cfg.c2, cfg.c3, **kw)
    except ValueError as exc:
        raise ConfigError("c0", str(exc)) from None


def initial_state(cfg: RunConfig) -> PolarState:
    text = cfg.initial.strip() or ("0.5,0" if cfg.mode == "simulate" else "thermal")
    if text == "thermal":
        return thermal_equilibrium(cfg.nT)
    try:
        ax, az = (float(v) for v in text.split(","))
        return to_polar(BlochVector(ax, 0.0, az))
    except ValueError as exc:
        raise ConfigError("initial", f"expected 'thermal' or 'ax,az': {exc}") from None


def _write_rows(path: Path, rows: list[dict]) -> None:
    if not rows:
        return
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in row.items()})


def _tagged(row: dict, cfg: RunConfig) -> dict:
    return {**row, "scheme": cfg.scheme, "config_hash": cfg.config_hash()}


def run_simulate(cfg, out: Path) -> list[str]:
    p0 = initial_state(cfg)
    artifacts, summary = [], []
    for w in omegas(cfg):
        params = sim_params(cfg, w)
        policy = make_policy(cfg, w)
        for i in range(cfg.n_traj):
            tr = simulate_trajectory(p0, policy, params, trajectory_rng(cfg.seed, i), stride=cfg.stride)
            name = f"trajectory_omega{w:g}_{i}.csv"
            rows = [dict(zip(("t", "a", "theta", "alpha", "mu", "dy", "epsilon"), map(float, r)))
                    for r in tr.path]
            _write_rows(out / name, [{**r, "seed": cfg.seed, "trajectory": i, "config_hash": cfg.config_hash()}
                                     for r in rows])
            artifacts.append(name)
            summary.append({"omega_over_k": w / cfg.k, "trajectory": i, "epsilon_mean": tr.epsilon_mean,
                            "final_a": tr.final.a, "final_theta": tr.final.theta, "seed": cfg.seed,
                            "config_hash": cfg.config_hash()})
    _write_rows(out / "summary.csv", summary)
    return artifacts + ["summary.csv"]


def run_ensemble(cfg, out: Path) -> list[str]:
    rows = []
    for w in omegas(cfg):
        params = sim_params(cfg, w)
        policy = make_policy(cfg, w)
        est = estimate_steady_error(params, policy, cfg.n_traj, p0=initial_state(cfg), workers=cfg.workers)
        rows.append(_tagged({**result_row(params, policy, est), "stationarity_z": est.stationarity_z}, cfg))
        print(f"omega={w:g} eps={est.epsilon_mean:.6e} +- {est.std_error:.2e} (n={est.n_traj})")
    path = out / "results.csv"
    path.unlink(missing_ok=True)
    append_results(path, rows, ("stationarity_z", "scheme", "config_hash"))
    return ["results.csv"]


def run_sweep(cfg, out: Path) -> list[str]:
    from .optimize import NoCrossingError, sweep_switch_point
    grid = omegas(cfg)
    params = sim_params(cfg, grid[0])
    half = None
    if cfg.half_pi_t_avg is not None:
        half = params.replace(t_avg=cfg.half_pi_t_avg)
    try:
        sw = sweep_switch_point(params, grid, cfg.n_traj, protocol_table(cfg), workers=cfg.workers,
                                params_half_pi=half, n_traj_half_pi=cfg.half_pi_n_traj)
        crossing = sw.crossing
    except NoCrossingError as exc:
        sw, crossing = exc.sweep, math.nan
        print("no crossing inside the omega grid", file=sys.stderr)
    except ValueError as exc:
        raise ConfigError("omega", str(exc)) from None
    rows = [_tagged({**r, "seed": cfg.seed, "crossing_omega_over_k": crossing}, cfg) for r in sw.rows()]
    _write_rows(out / "sweep.csv", rows)
    print(f"crossing_omega_over_k={crossing:.4g}")
    return ["sweep.csv"]


def run_optimize(cfg, out: Path) -> list[str]:
    from .optimize import optimize_coefficients
    rows = []
    for w in omegas(cfg):
        params = sim_params(cfg, w)
        init = make_policy(cfg, w).coeffs if cfg.protocol != "aligned" else ProtocolCoefficients()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            res = optimize_coefficients(params, init, cfg.degree, cfg.budget, cfg.n_traj, cfg.freeze_c0,
                                        cfg.fd_step, n_traj_final=cfg.n_traj_final, workers=cfg.workers)
        for msg in caught:
            print(f"warning: {msg.message}", file=sys.stderr)
        row = result_row(params, ControlPolicy.law(*res.coefficients.as_array()), res.estimate)
        row.update(crn_objective=res.objective, crn_initial=res.initial_objective,
                   converged=int(res.converged), n_evaluations=res.n_evaluations)
        rows.append(_tagged(row, cfg))
        print(f"omega={w:g} coefficients={tuple(round(v, 4) for v in res.coefficients.as_array())} "
              f"eps={res.estimate.epsilon_mean:.6e} +- {res.estimate.std_error:.2e}")
    path = out / "optimize.csv"
    path.unlink(missing_ok=True)
    append_results(path, rows, ("crn_objective", "crn_initial", "converged", "n_evaluations", "scheme",
                                "config_hash"))
    return ["optimize.csv"]


def run_fit(cfg, out: Path) -> list[str]:
    from .optimize import FitError, fit_c1_curve
    try:
        with open(cfg.input, newline="") as fh:
            pts = [(float(r["omega_over_k"]), float(r["c1"])) for r in csv.DictReader(fh)]
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError("input", f"cannot read omega_over_k,c1 points: {exc!r}") from None
    try:
        fit = fit_c1_curve(pts)
    except ValueError as exc:
        raise ConfigError("input", str(exc)) from None
    except FitError as exc:
        raise IntegrationError(str(exc)) from None
    _write_rows(out / "fit.csv", [{"A": fit.A, "B": fit.B, "r": fit.r, "m": fit.m, "sigma": fit.sigma,
                                   "n_points": len(pts), "config_hash": cfg.config_hash()}])
    print(f"A={fit.A:.4f} B={fit.B:.4f} r={fit.r:.4f} m={fit.m:.4g} sigma={fit.sigma:.4g}")
    return ["fit.csv"]


def run_check(cfg, out: Path) -> tuple[list[str], bool]:
    from .checks import run_checks
    results = run_checks(seed=cfg.seed)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    _write_rows(out / "check.csv", [{"check": n, "passed": int(ok), "detail": d, "seed": cfg.seed,
                                     "config_hash": cfg.config_hash()} for n, ok, d in results])
    return ["check.csv"], all(ok for _, ok, _ in results)


RUNNERS = {"simulate": run_simulate, "ensemble": run_ensemble, "sweep": run_sweep,
           "optimize": run_optimize, "fit": run_fit}


def run(cfg: RunConfig) -> int:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    ok = True
    if cfg.mode == "check":
        artifacts, ok = run_check(cfg, out)
    else:
        artifacts = RUNNERS[cfg.mode](cfg, out)
    manifest = {
        "mode": cfg.mode,
        "config": cfg.resolved(),
        "config_hash": cfg.config_hash(),
        "version": __version__,
        "seed": cfg.seed,
        "wall_time_s": time.perf_counter() - start,
        "artifacts": artifacts,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return 0 if ok else 1


def arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qubitfb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("--from-manifest", help="replay the resolved config of a manifest.json")
        for f in fields(RunConfig):
            if f.name != "mode":
                p.add_argument(f"--{f.name}", dest=f"key_{f.name}", metavar="VALUE")
    return parser


def main(argv=None) -> int:
    args = arg_parser().parse_args(argv)
    try:
        raw: dict = {}
        if args.from_manifest:
            raw.update(json.loads(Path(args.from_manifest).read_text())["config"])
        if args.config:
            raw.update(read_config_file(args.config))
        raw.update({k[4:]: v for k, v in vars(args).items() if k.startswith("key_") and v is not None})
        raw["mode"] = args.mode
        cfg = build_config(raw)
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (IntegrationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
