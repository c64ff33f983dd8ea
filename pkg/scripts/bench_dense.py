"""Throughput of tracking + conflict detection on the dense scene.

    python scripts/bench_dense.py [--repeats 5] [--profile]
"""

import argparse
import cProfile
import pstats
import time

import numpy as np

from trajconflict.pipeline import Pipeline
from trajconflict.scenario import dense_scene, synthetic_homography


def run_once(frames, H, tracking_only=False):
    pipe = Pipeline(homography=H, tracking_only=tracking_only)
    t0 = time.perf_counter()
    n = sum(1 for _ in pipe.run(frames))
    return n / (time.perf_counter() - t0)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--lanes", type=int, default=6)
    ap.add_argument("--per-lane", type=int, default=7)
    ap.add_argument("--peds", type=int, default=8)
    ap.add_argument("--profile", action="store_true")
    args = ap.parse_args()

    scene = dense_scene(args.lanes, args.per_lane, args.peds)
    frames, _ = scene.render()
    H = synthetic_homography()
    print(f"{scene.name}: {len(scene.actors)} actors, {len(frames)} frames, "
          f"{sum(len(f) for f in frames) / len(frames):.1f} detections/frame")
    for label, only in (("tracking only", True), ("tracking + conflict", False)):
        rates = [run_once(frames, H, only) for _ in range(args.repeats)]
        print(f"{label:20s} best {max(rates):7.0f} fps   median {np.median(rates):7.0f} fps")
    if args.profile:
        prof = cProfile.Profile()
        prof.runcall(run_once, frames, H)
        pstats.Stats(prof).sort_stats("cumulative").print_stats(20)


if __name__ == "__main__":
    main()
