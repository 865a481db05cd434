"""Compare the compiled and NumPy soft-min kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--sizes 50 200 500] [--repeat 5]

Times each kernel and one full log-domain Sinkhorn solve per backend and
reports the best-of-``repeat`` wall time and the speedup.
"""
import argparse
import timeit

import numpy as np

from otkit import build_kernel, kernels, solve_log
from otkit.core import SolveOptions


def _cases(n, rng):
    C = rng.random((n, n))
    f = rng.standard_normal(n) * 0.1
    g = rng.standard_normal(n) * 0.1
    F = rng.standard_normal((n, 3)) * 0.1
    G = rng.standard_normal((n, 3)) * 0.1
    a = rng.random(n) + 0.1
    a /= a.sum()
    eps = 0.05
    ck = build_kernel(C, eps)
    opts = SolveOptions(max_iters=50, fixed_iters=True, mode="log")
    return {
        "softmin_rows": lambda: kernels.softmin_rows(C, f, g, eps),
        "softmin_cols": lambda: kernels.softmin_cols(C, f, g, eps),
        "softmin_cols_grad": lambda: kernels.softmin_cols_grad(C, f, g, eps),
        "softmin_rows_batch(S=3)": lambda: kernels.softmin_rows_batch(C, F, G, eps),
        "solve_log(50 iters)": lambda: solve_log(a, a, ck, opts),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[50, 200, 500])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the NumPy backend is available")
    print(f"{'case':28s} {'n':>5s} " + " ".join(f"{b + ' [ms]':>14s}" for b in backends) + "   speedup")
    original = kernels.BACKEND
    rng = np.random.default_rng(0)
    try:
        for n in args.sizes:
            cases = _cases(n, rng)
            for name, fn in cases.items():
                times = {}
                for b in backends:
                    kernels.use_backend(b)
                    number = max(1, int(2e6 // (n * n * (50 if "solve" in name else 1))))
                    t = min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number
                    times[b] = t * 1e3
                speed = f"{times['python'] / times['cython']:8.1f}x" if "cython" in times else ""
                print(f"{name:28s} {n:5d} " + " ".join(f"{times[b]:14.3f}" for b in backends) + "   " + speed)
    finally:
        kernels.use_backend(original)


if __name__ == "__main__":
    main()
