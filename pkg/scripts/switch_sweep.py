"""Locate where the c0 = pi/2 branch overtakes c0 = 0 as omega grows."""
import argparse
import csv
from pathlib import Path

import numpy as np

from qubitfb import SimParams
from qubitfb.optimize import NoCrossingError, sweep_switch_point


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grid", type=float, nargs="+", default=list(np.arange(20.0, 71.0, 5.0)))
    ap.add_argument("--gamma", type=float, default=0.1)
    ap.add_argument("--dt", type=float, default=2e-4)
    ap.add_argument("--t-burn", type=float, default=5.0)
    ap.add_argument("--t-avg", type=float, default=20.0)
    ap.add_argument("--n-traj", type=int, default=1000)
    ap.add_argument("--half-pi-t-avg", type=float, default=5.0)
    ap.add_argument("--half-pi-n-traj", type=int, default=300)
    ap.add_argument("--scheme", default="kraus")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", type=Path, default=Path("runs/switch_sweep.csv"))
    args = ap.parse_args()

    params = SimParams(gamma=args.gamma, dt=args.dt, t_burn=args.t_burn, t_avg=args.t_avg, seed=args.seed,
                       scheme=args.scheme)
    try:
        sw = sweep_switch_point(params, args.grid, args.n_traj, params_half_pi=params.replace(t_avg=args.half_pi_t_avg),
                                n_traj_half_pi=args.half_pi_n_traj)
    except NoCrossingError as exc:
        sw = exc.sweep
    rows = list(sw.rows())
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    for r in rows:
        print("  ".join(f"{k}={v:.4g}" for k, v in r.items()))
    print(f"crossing at omega/k = {sw.crossing:.2f}")


if __name__ == "__main__":
    main()
