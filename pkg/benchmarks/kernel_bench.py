"""Time the numba and numpy gradient kernels on representative workloads.

Run:  python3 benchmarks/kernel_bench.py

Shapes mirror the experiment harness defaults (tasks x dim x samples).  The
two backends are checked for agreement before timing; the numba path is
compiled once outside the timed region.  Set LRMT_NO_NUMBA=1 to confirm the
package still runs (more slowly) without the JIT.
"""

import time

import numpy as np

from lrmt import kernels

SHAPES = [
    (10, 10, 200),    # noiseless-recovery scale
    (40, 20, 250),
    (40, 20, 1000),   # default iter-sweep scale
    (40, 20, 2000),
    (60, 20, 600),    # curriculum pooled scale
]
REPS = 20


def make_case(t_count, d, n, k=2, seed=0):
    gen = np.random.default_rng(seed)
    x = gen.normal(size=(t_count, d, n))
    y = gen.normal(size=(t_count, n))
    b = gen.normal(size=(d, k))
    wt = np.ascontiguousarray(gen.normal(size=(k, t_count)).T)
    return x, y, b, wt


def bench(fn, args, reps=REPS):
    fn(*args)  # warm-up / JIT
    best = np.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    have_numba = kernels._grad_numba is not None
    print(f"active backend: {kernels.active_backend()}")
    header = f"{'T x d x N':>16} | {'numpy ms':>9} | {'numba ms':>9} | {'speedup':>7}"
    print(header)
    print("-" * len(header))
    for t_count, d, n in SHAPES:
        args = make_case(t_count, d, n)
        if have_numba:
            gb_a, gw_a, sse_a = kernels._grad_numba(*args)
            gb_b, gw_b, sse_b = kernels._grad_numpy(*args)
            assert np.allclose(gb_a, gb_b, rtol=1e-10) and np.isclose(sse_a, sse_b)
        t_np = bench(kernels._grad_numpy, args)
        if have_numba:
            t_nb = bench(kernels._grad_numba, args)
            print(f"{t_count:>4} x{d:>3} x{n:>5} | {t_np*1e3:9.3f} | {t_nb*1e3:9.3f} | "
                  f"{t_np/t_nb:6.1f}x")
        else:
            print(f"{t_count:>4} x{d:>3} x{n:>5} | {t_np*1e3:9.3f} | {'-':>9} | {'-':>7}")


if __name__ == "__main__":
    main()
