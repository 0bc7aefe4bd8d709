"""Oracle checks shared by ``qubitfb check`` and the test suite."""
from __future__ import annotations

import math

import numpy as np

from .bloch import PolarState, from_polar, to_polar, BlochVector
from .ensemble import estimate_steady_error, trajectory_rng
from .oracles import rho_from_bloch, bloch_from_rho, thermal_evolution
from .params import SimParams
from .policy import ControlPolicy
from .polar import polar_step, theta2_moment_step, theta2_steady_state
from .sme import MeasurementAxis, simulate_trajectory, sme_step


def shared_noise_errors(dts=(4e-4, 2e-4, 1e-4), n_paths: int = 20, seed: int = 0, scheme: str = "milstein",
                        policy: ControlPolicy | None = None, p0: PolarState = PolarState(0.9, 0.3),
                        t_end: float = 1.0, k: float = 1.0, a_floor: float = 0.25):
    """Median over paths of max_t |theta_SME - theta_polar| and max_t |a_SME - a_polar|.

    Both routes see the same Wiener path, sampled on the finest step and
    summed onto each coarser grid. ``gamma = nT = 0``. Angle differences are
    taken on the circle. The polar coordinates are singular at ``a = 0``, so
    a path that brings either route below ``a_floor`` on any grid is left
    out. Returns ``({dt: (theta_err, a_err)}, n_kept)``.
    """
    policy = ControlPolicy.fixed(0.5, feedback=False) if policy is None else policy
    fine = min(dts)
    n_fine = int(round(t_end / fine))
    rng = trajectory_rng(seed, 0)
    out = {dt: [] for dt in dts}
    for _ in range(n_paths):
        dw_fine = rng.standard_normal(n_fine) * math.sqrt(fine)
        row = {}
        for dt in dts:
            ratio = int(round(dt / fine))
            dW = dw_fine.reshape(-1, ratio).sum(axis=1)
            params = SimParams(k=k, gamma=0.0, nT=0.0, omega=0.0, dt=dt, t_burn=0.0, t_avg=t_end,
                               scheme=scheme)
            s = r = p0
            e_theta = e_a = 0.0
            a_min = p0.a
            for w in dW:
                s = sme_step(s, MeasurementAxis(policy.axis(s.theta)), 0.0, params, float(w)).state
                r = polar_step(r, policy.axis(r.theta), 0.0, k, dt, float(w), scheme)
                e_theta = max(e_theta, abs(math.remainder(s.theta - r.theta, 2 * math.pi)))
                e_a = max(e_a, abs(s.a - r.a))
                a_min = min(a_min, s.a, r.a)
                if a_min < a_floor:
                    break
            row[dt] = (e_theta, e_a, a_min)
        if all(v[2] >= a_floor for v in row.values()):
            for dt, v in row.items():
                out[dt].append(v[:2])
    kept = len(out[fine])
    if kept == 0:
        raise RuntimeError("every path came within a_floor of the centre")
    return {dt: tuple(float(x) for x in np.median(v, axis=0)) for dt, v in out.items()}, kept


def convergence_order(dts, errors) -> float:
    """Least-squares slope of log(error) against log(dt)."""
    return float(np.polyfit(np.log(dts), np.log(errors), 1)[0])


def thermal_path_error(gamma: float = 0.1, nT: float = 0.1, dt: float = 1e-2, t_end: float = 20.0,
                       p0: PolarState = PolarState(0.5, math.pi / 2), scheme: str = "euler") -> float:
    """Max over the path of |a_sim - a_oracle| (Bloch components) without measurement or feedback."""
    params = SimParams(k=0.0, gamma=gamma, nT=nT, omega=0.0, dt=dt, t_burn=0.0, t_avg=t_end, scheme=scheme)
    policy = ControlPolicy.fixed(0.0, feedback=False)
    tr = simulate_trajectory(p0, policy, params, trajectory_rng(0, 0), stride=1)
    b0 = from_polar(p0)
    rho0 = rho_from_bloch(b0.ax, 0.0, b0.az)
    err = 0.0
    for t, a, theta in tr.path[:, :3]:
        ref = bloch_from_rho(thermal_evolution(rho0, gamma, nT, t))
        sim = from_polar(PolarState(a, theta))
        err = max(err, abs(sim.ax - ref[0]), abs(sim.az - ref[2]))
    return err


def thermal_fixed_point(gamma: float = 0.1, nT: float = 0.1, dt: float = 1e-3, n_traj: int = 8, seed: int = 0,
                        t_burn: float = 300.0, t_avg: float = 10.0):
    """Window-averaged az of a k = 0 ensemble started in the ground state.

    Returns ``(az_mean, az_se, -1/(1+2nT))``.
    """
    params = SimParams(k=0.0, gamma=gamma, nT=nT, omega=0.0, dt=dt, t_burn=t_burn, t_avg=t_avg, seed=seed)
    est = estimate_steady_error(params, ControlPolicy.fixed(0.0, feedback=False), n_traj,
                                p0=to_polar(BlochVector(0.0, 0.0, -1.0)))
    return est.az_mean, est.az_se, -1.0 / (1.0 + 2.0 * nT)


def theta2_fixed_point_gap(c1: float = -0.5, k: float = 1.0, gamma: float = 0.1, nT: float = 0.1,
                           dt: float = 1e-2, max_steps: int = 10**6) -> float:
    """|fixed point of the omega = 0 moment map - closed-form steady state|."""
    x = 0.0
    for _ in range(max_steps):
        nxt = theta2_moment_step(x, c1, 0.0, k, gamma, nT, dt)
        if nxt == x:
            break
        x = nxt
    return abs(x - theta2_steady_state(c1, k, gamma, nT))


def run_checks(seed: int = 0, n_paths: int = 32) -> list[tuple[str, bool, str]]:
    results = []

    dts = (4e-4, 2e-4, 1e-4)
    errs, kept = shared_noise_errors(dts, n_paths=n_paths, seed=seed)
    for j, name in enumerate(("theta", "a")):
        order = convergence_order(dts, [errs[dt][j] for dt in dts])
        results.append((f"shared_noise_{name}", 0.8 <= order <= 1.25,
                        f"order {order:.2f} (max diffs {', '.join(f'{errs[dt][j]:.2e}' for dt in dts)}; "
                        f"{kept}/{n_paths} paths)"))

    e1 = thermal_path_error(dt=1e-2)
    e2 = thermal_path_error(dt=5e-3)
    ratio = e1 / e2
    results.append(("thermal_oracle_path", 1.8 <= ratio <= 2.2,
                    f"max error {e1:.2e} -> {e2:.2e} on halving dt (ratio {ratio:.2f})"))

    az, se, target = thermal_fixed_point(seed=seed)
    results.append(("thermal_fixed_point", abs(az - target) <= max(3 * se, 1e-9),
                    f"az {az:.12f} vs {target:.12f} (se {se:.1e})"))

    gap = theta2_fixed_point_gap()
    results.append(("theta2_fixed_point", gap <= 1e-12, f"gap {gap:.1e}"))
    return results
