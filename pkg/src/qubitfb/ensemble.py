"""Trajectory ensembles: steady-state error estimates, paired (CRN) comparisons."""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bloch import PolarState, from_polar, thermal_equilibrium
from .params import SimParams
from .policy import ControlPolicy
from .sme import N_ACC, SCHEMES, IntegrationError, _advance_block, simulate_trajectory

RESULT_COLUMNS = (
    "omega_over_k", "c0", "c1", "c2", "c3", "gamma", "nT", "n_traj", "dt",
    "t_burn", "t_avg", "epsilon_mean", "std_error", "seed",
)


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream owned by trajectory ``index`` of master ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def default_workers() -> int:
    return os.cpu_count() or 1


def _run_block(params: SimParams, policy: ControlPolicy, p0: PolarState, start: int, stop: int,
               chunk: int) -> np.ndarray:
    n = stop - start
    kind, pdata = policy.encode(params.omega)
    b = from_polar(p0)
    x = np.full(n, b.ax)
    z = np.full(n, b.az)
    acc = np.zeros((n, N_ACC))
    fail = np.zeros(1, dtype=np.int64)
    gens = [trajectory_rng(params.seed, i) for i in range(start, stop)]
    burn, avg = params.burn_steps, params.avg_steps
    total = burn + avg
    noise = np.empty((n, min(chunk, total)))
    done = 0
    while done < total:
        m = min(chunk, total - done)
        for i, g in enumerate(gens):
            g.standard_normal(out=noise[i, :m])
        bad = _advance_block(x, z, noise[:, :m], done, burn, avg // 2, total, kind, pdata,
                             params.k, params.gamma, params.nT, params.dt, acc, fail,
                             SCHEMES[params.scheme])
        if bad >= 0:
            raise IntegrationError("trajectory diverged", trajectory=start + bad,
                                   step=int(fail[0]), seed=params.seed)
        done += m
    half = avg // 2
    out = acc.copy()
    out[:, 0] /= half
    out[:, 1] /= avg - half
    out[:, 2:] /= avg
    return out


def run_ensemble(params: SimParams, policy: ControlPolicy, n_traj: int, p0: PolarState | None = None,
                 workers: int | None = None, block: int = 128, chunk: int = 4096) -> np.ndarray:
    """Per-trajectory window averages, shape (n_traj, 5), in trajectory-index order.

    Columns: error probability over the first and second half of the window,
    theta**2, Bloch length a, and az.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be positive")
    p0 = thermal_equilibrium(params.nT) if p0 is None else p0
    bounds = [(s, min(s + block, n_traj)) for s in range(0, n_traj, block)]
    workers = default_workers() if workers is None else max(1, workers)
    if workers == 1 or len(bounds) == 1:
        parts = [_run_block(params, policy, p0, s, e, chunk) for s, e in bounds]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda se: _run_block(params, policy, p0, se[0], se[1], chunk), bounds))
    return np.concatenate(parts)


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    n = len(values)
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return float(values.mean()), se


@dataclass(frozen=True)
class EnsembleEstimate:
    epsilon_mean: float
    std_error: float
    n_traj: int
    t_burn: float
    t_avg: float
    seed: int
    dt: float = float("nan")
    halves: tuple = (float("nan"), float("nan"))
    halves_se: tuple = (float("nan"), float("nan"))
    theta2_mean: float = float("nan")
    theta2_se: float = float("nan")
    a_mean: float = float("nan")
    az_mean: float = float("nan")
    az_se: float = float("nan")
    per_trajectory: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def stationarity_z(self) -> float:
        """Difference of the two half-window estimates in combined standard errors."""
        diff = self.halves[1] - self.halves[0]
        return diff / math.hypot(*self.halves_se)

    @classmethod
    def from_samples(cls, samples: np.ndarray, params: SimParams) -> "EnsembleEstimate":
        half = params.avg_steps // 2
        w0 = half / params.avg_steps
        eps = w0 * samples[:, 0] + (1 - w0) * samples[:, 1]
        mean, se = _mean_se(eps)
        h0, s0 = _mean_se(samples[:, 0])
        h1, s1 = _mean_se(samples[:, 1])
        th2, th2_se = _mean_se(samples[:, 2])
        az, az_se = _mean_se(samples[:, 4])
        return cls(mean, se, len(eps), params.t_burn, params.t_avg, params.seed, params.dt,
                   (h0, h1), (s0, s1), th2, th2_se, float(samples[:, 3].mean()), az, az_se, eps)


def estimate_steady_error(params: SimParams, policy: ControlPolicy, n_traj: int,
                          p0: PolarState | None = None, workers: int | None = None) -> EnsembleEstimate:
    if n_traj < 2:
        raise ValueError("n_traj must be at least 2")
    samples = run_ensemble(params, policy, n_traj, p0=p0, workers=workers)
    return EnsembleEstimate.from_samples(samples, params)


@dataclass(frozen=True)
class PairedEstimate:
    difference: float
    std_error: float
    n_traj: int
    a: EnsembleEstimate
    b: EnsembleEstimate

    @property
    def independent_std_error(self) -> float:
        """Standard error the difference would have without shared noise."""
        return math.hypot(self.a.std_error, self.b.std_error)


def paired_difference(params: SimParams, policy_a: ControlPolicy, policy_b: ControlPolicy, n_traj: int,
                      p0: PolarState | None = None, workers: int | None = None) -> PairedEstimate:
    """Mean and standard error of eps_A - eps_B over identical noise streams."""
    if n_traj < 2:
        raise ValueError("n_traj must be at least 2")
    est_a = estimate_steady_error(params, policy_a, n_traj, p0, workers)
    if policy_b == policy_a:
        est_b = est_a
    else:
        est_b = estimate_steady_error(params, policy_b, n_traj, p0, workers)
    diff = est_a.per_trajectory - est_b.per_trajectory
    mean, se = _mean_se(diff)
    return PairedEstimate(mean, se, n_traj, est_a, est_b)


def burn_in_heuristic(params: SimParams, override: float | None = None) -> float:
    """Burn-in time ``max(10/gamma_eff, 5 pi/omega, 10/k)``, ``gamma_eff = gamma(1+2nT)``."""
    if override is not None:
        return float(override)
    terms = [10.0 / params.k] if params.k > 0 else []
    gamma_eff = params.gamma * (1.0 + 2.0 * params.nT)
    if gamma_eff > 0:
        terms.append(10.0 / gamma_eff)
    if params.omega > 0:
        terms.append(5.0 * math.pi / params.omega)
    if not terms:
        raise ValueError("burn-in undefined with k = gamma = omega = 0; give an override")
    return max(terms)


def error_curve(params: SimParams, policy: ControlPolicy, n_traj: int, stride: int,
                p0: PolarState | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ensemble mean and standard error of eps(t) sampled every ``stride`` steps.

    Diagnostic for checking that the chosen burn-in reaches stationarity.
    """
    p0 = thermal_equilibrium(params.nT) if p0 is None else p0
    paths = [simulate_trajectory(p0, policy, params, trajectory_rng(params.seed, i), stride=stride).path
             for i in range(n_traj)]
    eps = np.stack([p[:, 6] for p in paths])
    t = paths[0][:, 0]
    return t, eps.mean(axis=0), eps.std(axis=0, ddof=1) / math.sqrt(n_traj)


def result_row(params: SimParams, policy: ControlPolicy, est: EnsembleEstimate) -> dict:
    c = policy.coeffs
    return {
        "omega_over_k": params.omega / params.k, "c0": c.c0, "c1": c.c1, "c2": c.c2, "c3": c.c3,
        "gamma": params.gamma, "nT": params.nT, "n_traj": est.n_traj, "dt": params.dt,
        "t_burn": params.t_burn, "t_avg": params.t_avg, "epsilon_mean": est.epsilon_mean,
        "std_error": est.std_error, "seed": params.seed,
    }


def append_results(path, rows, extra_columns=()) -> None:
    """Append result rows to a CSV, writing the header when the file is new."""
    path = Path(path)
    columns = list(RESULT_COLUMNS) + list(extra_columns)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        if new:
            writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in row.items()})
