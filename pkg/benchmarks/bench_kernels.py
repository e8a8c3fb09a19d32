"""Compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 3]

Prints best-of-N wall times and the speed-up for the three hot loops.
"""
import argparse
import time

import numpy as np

from detdiff import _pykernels

try:
    from detdiff import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    a = rng.uniform(2.05, 8.0, 2000)
    b = rng.uniform(-0.5, 0.5, 2000)
    x0 = rng.uniform(-0.5, 0.5, 2000)
    mod = 2 * 7 * 1_000_000_007
    s0 = rng.integers(0, mod, 2000, dtype=np.int64)
    return {
        "transport_batch (2000 points)": lambda k: k.transport_batch(a, b),
        "walk_float (2000 walkers x 2000 steps)": lambda k: k.walk_float(3.7, 0.13, x0, 2000, [1000, 2000]),
        "walk_modular (2000 walkers x 2000 steps)": lambda k: k.walk_modular(3, 12345, mod, s0, 2000, [1000, 2000]),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled kernels not built; timing the fallback only")
    print(f"{'kernel':44s} {'cython':>10s} {'python':>10s} {'speed-up':>9s}")
    for name, fn in cases().items():
        tp = best_of(lambda: fn(_pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:44s} {'-':>10s} {tp:10.4f} {'-':>9s}")
            continue
        tc = best_of(lambda: fn(_ckernels), args.repeat)
        print(f"{name:44s} {tc:10.4f} {tp:10.4f} {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
