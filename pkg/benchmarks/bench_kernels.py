"""Compare the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import importlib
import timeit

import numpy as np

from bbs_sense import _kernels_py
from bbs_sense.coverage import build_manhattan_grid, n_words


def cases(grid, rng):
    words = n_words(grid.m)
    mat = rng.integers(0, 2**63, size=(200, words), dtype=np.uint64)
    cov = rng.integers(0, 2**63, size=words, dtype=np.uint64)
    ties = rng.random(5001)
    return {
        "popcount_andnot x200": lambda k: [k.popcount_andnot(row, cov) for row in mat],
        "batch_popcount_andnot 200x69": lambda k: k.batch_popcount_andnot(mat, cov),
        "road_walk 500 steps": lambda k: k.road_walk(grid.neighbors, 17, 500, ties),
        "road_walk 5000 steps": lambda k: k.road_walk(grid.neighbors, 17, 5000, ties),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    try:
        compiled = importlib.import_module("bbs_sense._kernels")
    except ImportError:
        compiled = None
        print("compiled extension not built; showing the fallback only")
    grid = build_manhattan_grid(3, 3, 1135, 319, 1.0)
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in cases(grid, rng).items():
        def best(mod):
            n = 5
            return min(timeit.repeat(lambda: fn(mod), number=n, repeat=args.repeat)) / n * 1e3
        py = best(_kernels_py)
        if compiled is None:
            print(f"{name:32s} {py:10.3f}")
            continue
        cy = best(compiled)
        print(f"{name:32s} {py:10.3f} {cy:10.3f} {py / cy:7.1f}x")


if __name__ == "__main__":
    main()
