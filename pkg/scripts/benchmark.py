"""Throughput of the compiled step kernel for each integration scheme."""
import argparse
import time

from qubitfb import ControlPolicy, SimParams
from qubitfb.ensemble import run_ensemble


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-traj", type=int, default=256)
    ap.add_argument("--steps", type=int, default=20000)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()

    dt = 1e-4
    for scheme in ("euler", "milstein", "kraus"):
        params = SimParams(omega=10.0, dt=dt, t_burn=0.0, t_avg=args.steps * dt, scheme=scheme)
        pol = ControlPolicy.published(10.0)
        run_ensemble(params.replace(t_avg=20 * dt), pol, 2)  # compile
        t0 = time.perf_counter()
        run_ensemble(params, pol, args.n_traj, workers=args.workers)
        wall = time.perf_counter() - t0
        print(f"{scheme:9s} {wall / (args.n_traj * params.avg_steps) * 1e9:7.1f} ns/step "
              f"({args.n_traj} x {params.avg_steps} steps in {wall:.2f}s)")


if __name__ == "__main__":
    main()
