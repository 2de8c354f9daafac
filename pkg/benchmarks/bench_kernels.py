#!/usr/bin/env python3
"""Benchmark the compiled deposit kernel against the pure-python twin.

The deposit is the server's hot inner loop: every admitted gaze sample
splats a truncated Gaussian onto the room grid. Run after building the
extension (pip install -e .):

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --points 256 --reps 200
"""

import argparse
import random
import time

import numpy as np

from calmrelay._kernels import AVAILABLE


def bench(fn, xs, ys, ws, grid_w, grid_h, bandwidth, reps):
    cells = np.zeros(grid_w * grid_h)
    # warmup
    fn(cells, grid_w, grid_h, xs, ys, ws, bandwidth)
    t0 = time.perf_counter()
    for _ in range(reps):
        fn(cells, grid_w, grid_h, xs, ys, ws, bandwidth)
    dt = time.perf_counter() - t0
    return dt / reps


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--grid", default="64x36")
    ap.add_argument("--bandwidth", type=float, default=0.03)
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--points", type=int, action="append",
                    help="batch sizes to test (repeatable)")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    grid_w, grid_h = (int(v) for v in args.grid.split("x"))
    sizes = args.points or [1, 8, 32, 128, 256, 1024]
    rng = random.Random(args.seed)

    names = sorted(AVAILABLE)
    if "cython" not in AVAILABLE:
        print("note: compiled kernel not built; benchmarking python only")

    print(f"grid {grid_w}x{grid_h}, bandwidth {args.bandwidth}, "
          f"{args.reps} reps per measurement\n")
    header = f"{'points':>8} " + "".join(f"{n:>14} " for n in names)
    if len(names) == 2:
        header += f"{'speedup':>9}"
    print(header)
    for n in sizes:
        xs = np.array([rng.random() for _ in range(n)])
        ys = np.array([rng.random() for _ in range(n)])
        ws = np.ones(n)
        times = {}
        for name in names:
            times[name] = bench(AVAILABLE[name], xs, ys, ws, grid_w, grid_h,
                                args.bandwidth, args.reps)
        row = f"{n:>8} " + "".join(f"{times[m] * 1e6:>11.1f} us " for m in names)
        if len(names) == 2:
            row += f"{times['python'] / times['cython']:>8.1f}x"
        print(row)

    # bit-identity spot check while we are here
    if len(names) == 2:
        a = np.zeros(grid_w * grid_h)
        b = np.zeros(grid_w * grid_h)
        xs = np.array([rng.random() for _ in range(64)])
        ys = np.array([rng.random() for _ in range(64)])
        ws = np.array([rng.uniform(0.1, 2.0) for _ in range(64)])
        AVAILABLE["python"](a, grid_w, grid_h, xs, ys, ws, args.bandwidth)
        AVAILABLE["cython"](b, grid_w, grid_h, xs, ys, ws, args.bandwidth)
        print("\nbackends bit-identical:", bool(np.array_equal(a, b)))


if __name__ == "__main__":
    main()
