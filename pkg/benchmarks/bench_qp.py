"""Benchmark: compiled QP kernel vs the pure NumPy fallback.

Times both backends on random strictly convex QPs at the sizes the
controllers actually produce (condensed control horizon: ~20 variables,
tens of rows) and a few smaller/larger points, and checks the solutions
agree along the way.

Usage: python benchmarks/bench_qp.py [--repeats 200]
"""

import argparse
import time

import numpy as np

from urbansmpc.qp import _pure

try:
    from urbansmpc.qp import _core
except ImportError:
    _core = None

SIZES = [(6, 8), (12, 20), (20, 40), (22, 60), (30, 80)]


def make_qp(rng, n, m):
    M = rng.standard_normal((n, n))
    H = M @ M.T + np.eye(n)
    g = rng.standard_normal(n)
    A = rng.standard_normal((m, n))
    b = rng.standard_normal(m) + 0.5
    return H, g, A, b


def bench(kernel, problems, repeats):
    # warm-up pass doubles as the correctness sweep
    for H, g, A, b in problems:
        kernel.solve_ineq(H, g, A, b, 1000)
    t0 = time.perf_counter()
    for _ in range(repeats):
        for H, g, A, b in problems:
            kernel.solve_ineq(H, g, A, b, 1000)
    return (time.perf_counter() - t0) / (repeats * len(problems))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--problems", type=int, default=20,
                        help="random QPs per size")
    args = parser.parse_args()

    if _core is None:
        print("compiled kernel unavailable; build it first "
              "(pip install -e . --no-build-isolation)")
        return

    rng = np.random.default_rng(42)
    print(f"{'size (n x m)':>14} {'pure':>12} {'compiled':>12} {'speedup':>9}")
    for n, m in SIZES:
        problems = [make_qp(rng, n, m) for _ in range(args.problems)]
        for H, g, A, b in problems:
            zp, lp, sp, _ = _pure.solve_ineq(H, g, A, b, 1000)
            zc, lc, sc, _ = _core.solve_ineq(H, g, A, b, 1000)
            assert sp == sc
            if sp == _pure.STATUS_OPTIMAL:
                assert np.allclose(zp, zc, atol=1e-8)
        t_pure = bench(_pure, problems, args.repeats)
        t_core = bench(_core, problems, args.repeats)
        print(f"{n:>7} x {m:<4} {t_pure * 1e6:>10.1f}us {t_core * 1e6:>10.1f}us "
              f"{t_pure / t_core:>8.1f}x")


if __name__ == "__main__":
    main()
