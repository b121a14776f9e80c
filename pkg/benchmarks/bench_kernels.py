"""Compare the compiled and numpy kernel cores on the GP hot paths.

Usage: python benchmarks/bench_kernels.py [--sizes 100 300 675] [--dim 2] [--repeat 5]

Prints one line per (function, size) with the best-of-``repeat`` time for
each backend, the speed-up, and the maximum absolute difference between
the two results.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from perftx import _kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 300, 675])
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    numpy_core = _kernels.get_backend("numpy")
    try:
        compiled = _kernels.get_backend("cython")
    except ImportError:
        print("compiled core not built; only the numpy core is available")
        return 1
    rng = np.random.Generator(np.random.PCG64(0))
    inv_ls = rng.uniform(1, 10, args.dim)
    print(f"{'function':<22}{'n':>6}{'cython ms':>12}{'numpy ms':>12}{'speed-up':>10}{'max diff':>12}")
    for n in args.sizes:
        X = rng.uniform(0, 1, (n, args.dim))
        Xq = rng.uniform(0, 1, (1000, args.dim))
        M = rng.normal(size=(n, n))
        M = M + M.T
        cases = {
            "se_gram": lambda core: core.se_gram(X, inv_ls),
            "se_cross(1000 x n)": lambda core: core.se_cross(Xq, X, inv_ls),
            "weighted_sqdist_sums": lambda core: core.weighted_sqdist_sums(M, X),
        }
        for name, call in cases.items():
            tc, rc = best_of(lambda: call(compiled), args.repeat)
            tn, rn = best_of(lambda: call(numpy_core), args.repeat)
            diff = float(np.max(np.abs(np.asarray(rc) - np.asarray(rn))))
            print(f"{name:<22}{n:>6}{tc * 1e3:>12.3f}{tn * 1e3:>12.3f}{tn / tc:>10.2f}{diff:>12.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
