"""Time the numba and numpy kernel backends side by side.

    python3 benchmarks/bench_kernels.py [--n 1000000] [--repeat 5]

The first numba call compiles (or loads the on-disk cache); it is excluded
from the timings and reported separately.
"""

import argparse
import time

import numpy as np

from unfairness_ledger import kernels


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--cells", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    n = args.n
    cells = rng.integers(0, args.cells, n).astype(np.int64)
    a = rng.random(n)
    g = (rng.random(n) < 0.4).astype(np.float64)
    ma = np.bincount(cells, weights=a, minlength=args.cells) / np.bincount(cells, minlength=args.cells)
    mg = np.bincount(cells, weights=g, minlength=args.cells) / np.bincount(cells, minlength=args.cells)
    # PAVA input: noisy increasing targets, many violators
    t = np.sort(rng.random(n)) + rng.normal(0, 0.2, n)
    w = np.ones(n)

    cases = {
        "cell_sums": (
            lambda: kernels.cell_sums_numpy(cells, args.cells, a, g),
            lambda: kernels.cell_sums_numba(cells, args.cells, a, g),
        ),
        "cell_centered_cross": (
            lambda: kernels.cell_centered_cross_numpy(cells, args.cells, a, g, ma, mg),
            lambda: kernels.cell_centered_cross_numba(cells, args.cells, a, g, ma, mg),
        ),
        "pava": (
            lambda: kernels.pava_numpy(t, w),
            lambda: kernels.pava_numba(t, w),
        ),
    }

    print(f"n={n} cells={args.cells} numba available: {kernels.HAVE_NUMBA}")
    print(f"{'kernel':<22}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'first call [s]':>16}")
    for name, (np_fn, nb_fn) in cases.items():
        t0 = time.perf_counter()
        nb_fn()
        first = time.perf_counter() - t0
        # pure-python PAVA is slow, so time it once at full size
        t_np = best_of(np_fn, 1 if name == "pava" else args.repeat)
        t_nb = best_of(nb_fn, args.repeat)
        print(f"{name:<22}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}{first:>16.3f}")


if __name__ == "__main__":
    main()
