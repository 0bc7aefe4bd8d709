"""Single feedback trajectories from the equatorial state a = (1/2, 0, 0).

Writes one CSV per omega with t, a, theta, the measurement axis, the
feedback rate, the record increment and the error probability.
"""
import argparse
import math
from pathlib import Path

from qubitfb import ControlPolicy, PolarState, SimParams, simulate_trajectory
from qubitfb.ensemble import trajectory_rng


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--omega", type=float, nargs="+", default=[20.0, 50.0])
    ap.add_argument("--t-end", type=float, default=1.0)
    ap.add_argument("--dt", type=float, default=1e-4)
    ap.add_argument("--stride", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--scheme", default="euler")
    ap.add_argument("--out", type=Path, default=Path("runs/trajectories"))
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    p0 = PolarState(0.5, math.pi / 2)
    for w in args.omega:
        params = SimParams(omega=w, dt=args.dt, t_burn=0.0, t_avg=args.t_end, seed=args.seed, scheme=args.scheme)
        tr = simulate_trajectory(p0, ControlPolicy.published(w), params, trajectory_rng(args.seed, 0),
                                 stride=args.stride)
        path = args.out / f"trajectory_omega{w:g}.csv"
        tr.write_csv(path)
        # time for |theta| to first fall below 0.1
        t = tr.path[:, 0]
        below = abs(tr.path[:, 2]) < 0.1
        t_hit = float(t[below.argmax()]) if below.any() else math.nan
        print(f"omega={w:g}: final a={tr.final.a:.4f} theta={tr.final.theta:+.4f} "
              f"|theta|<0.1 at t={t_hit:.3f} -> {path}")


if __name__ == "__main__":
    main()
