"""Compare the compiled and pure-Python chain kernels on identical draws.

    python3 benchmarks/bench_sampler.py [--steps N] [--nodes M ...]
"""

import argparse
import time

import numpy as np

from mlnira import _kernels_py

try:
    from mlnira import _kernels
except ImportError:
    _kernels = None


def run(impl, W, theta, ks, us, thin):
    s = np.zeros(theta.size, np.uint8)
    out = np.empty((ks.size // thin, theta.size), np.uint8)
    t0 = time.perf_counter()
    impl.record(W, theta, 1.0, s, ks, us, thin, out)
    return time.perf_counter() - t0, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=500_000)
    ap.add_argument("--nodes", type=int, nargs="+", default=[4, 7, 15, 30])
    args = ap.parse_args()
    if _kernels is None:
        print("compiled kernel not built; only the Python backend is available")
    print(f"{'nodes':>5}  {'python s':>9}  {'cython s':>9}  {'speedup':>8}  identical")
    rng = np.random.default_rng(0)
    for m in args.nodes:
        W = np.triu(rng.uniform(-1, 1, (m, m)), 1)
        W = np.ascontiguousarray(W + W.T)
        theta = rng.uniform(-2, 0, m)
        n = args.steps - args.steps % m
        ks, us = rng.integers(0, m, n), rng.random(n)
        t_py, out_py = run(_kernels_py, W, theta, ks, us, m)
        if _kernels is None:
            print(f"{m:>5}  {t_py:>9.3f}  {'-':>9}  {'-':>8}  -")
            continue
        t_c, out_c = run(_kernels, W, theta, ks, us, m)
        same = np.array_equal(out_py, out_c)
        print(f"{m:>5}  {t_py:>9.3f}  {t_c:>9.4f}  {t_py / t_c:>7.0f}x  {same}")


if __name__ == "__main__":
    main()
