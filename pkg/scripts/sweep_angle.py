"""Sweep the approach-angle threshold (and optionally tau_d) over the builtin suite.

    python scripts/sweep_angle.py [--jobs 4] [--out sweep.jsonl]
"""

import argparse
import json

from trajconflict.evaluation import sweep
from trajconflict.scenario import builtin_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--angles", default="15,25,35,45,60,75,85,89,179")
    ap.add_argument("--tau-d", default="0.6")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out")
    args = ap.parse_args()

    grid = {"conflict.theta_min": [float(a) for a in args.angles.split(",")],
            "tracker.tau_d": [float(t) for t in args.tau_d.split(",")]}
    rows = sweep(grid, builtin_suite(), jobs=args.jobs)
    print(f"{'theta_min':>9s} {'tau_d':>6s} {'DR':>8s} {'FAR':>8s}")
    for r in rows:
        p = r["params"]
        dr = "n/a" if r["DR"] is None else f"{100 * r['DR']:.1f}%"
        print(f"{p['conflict.theta_min']:9.0f} {p['tracker.tau_d']:6.2f} {dr:>8s} {100 * r['FAR']:7.1f}%")
    if args.out:
        with open(args.out, "w") as fh:
            for r in rows:
                fh.write(json.dumps(r) + "\n")


if __name__ == "__main__":
    main()
