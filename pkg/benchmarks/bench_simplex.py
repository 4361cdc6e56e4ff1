#!/usr/bin/env python3
"""Benchmark the compiled simplex kernel against the pure-numpy fallback.

Runs identical pivot sequences through both kernels on random bounded LPs
and on a verification-LP workload, and reports wall-clock speedups.  The
two kernels implement the same arithmetic, so objectives must agree
exactly; this doubles as a parity check.

Usage: python benchmarks/bench_simplex.py [--quick]
"""

import sys
import time

import numpy as np

from nnreach.lp import solver as lpsolver
from nnreach.lp import _simplex_py
from nnreach.reach import Propagator, Template, recursive_reach
from nnreach.relax import IntervalBound
from nnreach.systems import random_nnds

try:
    from nnreach.lp import _simplex as _compiled
except ImportError:
    _compiled = None


def random_lp(seed, n, m):
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(-0.5, 0.5, n)
    A = rng.normal(size=(m, n))
    b = A @ x0 + rng.uniform(0.1, 1.5, m)
    lo = x0 - rng.uniform(0.5, 2.0, n)
    hi = x0 + rng.uniform(0.5, 2.0, n)
    c = rng.normal(size=n)
    return c, A, b, lo, hi


def time_batch(kernel, cases, repeats):
    lpsolver._kernel = kernel
    objs = []
    t0 = time.perf_counter()
    for _ in range(repeats):
        objs = [
            lpsolver.simplex_solve(c, np.zeros((0, len(c))), np.zeros(0), A, b, lo, hi).objective
            for c, A, b, lo, hi in cases
        ]
    return (time.perf_counter() - t0) / repeats, objs


def time_reach(kernel, f, X0, repeats):
    lpsolver._kernel = kernel
    p = Propagator("lp", alpha_rule=0.0, preact="lp", lp_backend="simplex")
    t0 = time.perf_counter()
    for _ in range(repeats):
        run = recursive_reach(p, f, X0, None, 3, Template.octagon(2))
    return (time.perf_counter() - t0) / repeats, run


def main():
    quick = "--quick" in sys.argv
    if _compiled is None:
        print("compiled kernel not built; run pip install -e . first")
        return 1
    original = lpsolver._kernel
    repeats = 1 if quick else 3

    print(f"{'workload':<28}{'numpy':>10}{'cython':>10}{'speedup':>9}")
    try:
        for n, m, count in ((6, 12, 60), (20, 40, 30), (60, 120, 10), (150, 300, 3)):
            cases = [random_lp(1000 + i, n, m) for i in range(count if not quick else max(2, count // 5))]
            t_py, obj_py = time_batch(_simplex_py, cases, repeats)
            t_cy, obj_cy = time_batch(_compiled, cases, repeats)
            assert obj_py == obj_cy, "kernel parity violated"
            label = f"{len(cases)} LPs {n}x{m}"
            print(f"{label:<28}{t_py:>9.3f}s{t_cy:>9.3f}s{t_py / t_cy:>8.1f}x")

        f = random_nnds(5, 2, 0, [10, 10, 2], "relu")
        X0 = IntervalBound(np.array([-0.3, -0.3]), np.array([0.3, 0.3]))
        t_py, _ = time_reach(_simplex_py, f, X0, repeats)
        t_cy, _ = time_reach(_compiled, f, X0, repeats)
        print(f"{'recursive reach (LP, T=3)':<28}{t_py:>9.3f}s{t_cy:>9.3f}s{t_py / t_cy:>8.1f}x")
    finally:
        lpsolver._kernel = original
    return 0


if __name__ == "__main__":
    sys.exit(main())
