#!/usr/bin/env python3
"""Benchmark the JIT kernels against the pure-numpy fallback path.

Runs each hot kernel on representative workloads and prints a timing
table. The fallback path is the exact same source executed without JIT
compilation (what you get with ``HFELSIM_NO_NUMBA=1``), so the speedup
column is the net benefit of keeping numba in the dependency set.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from hfelsim import kernels


def time_call(fn, args, repeats):
    fn(*args)  # warm-up (includes JIT compilation for the numba path)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def sgd_workload(rng, samples=360, dim_aug=33, classes=10, iters=10,
                 batch=32):
    w = rng.normal(size=(dim_aug, classes))
    xa = rng.normal(size=(samples, dim_aug))
    labels = rng.integers(0, classes, size=samples)
    batch_idx = rng.integers(0, samples, size=(iters, batch))
    return (w, xa, labels, batch_idx, 0.05, 0.9)


def alloc_workload(rng, devices=3):
    cycles = 10 * 32 * rng.uniform(1e5, 3e5, size=devices)
    alpha = 2e-28 * rng.uniform(0.01, 0.1, size=devices)
    power = np.full(devices, 0.01)
    fmin = np.full(devices, 2e9)
    fmax = np.full(devices, 3e9)
    caps = rng.uniform(0.008, 0.02, size=devices)
    log_rate = np.log2(1.0 + 10 ** (rng.uniform(0, 15, size=devices) / 10))
    return (0.5, cycles, alpha, power, fmin, fmax, caps, log_rate, 1.5e5)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cases = [
        ("sgd_steps (10 iters, batch 32)", kernels.sgd_steps,
         kernels._sgd_steps, sgd_workload(rng)),
        ("sgd_steps (100 iters, batch 64)", kernels.sgd_steps,
         kernels._sgd_steps, sgd_workload(rng, iters=100, batch=64)),
        ("alloc_at_deadline (3 devices)", kernels.alloc_at_deadline,
         kernels._alloc_at_deadline, alloc_workload(rng)),
        ("alloc_at_deadline (12 devices)", kernels.alloc_at_deadline,
         kernels._alloc_at_deadline, alloc_workload(rng, devices=12)),
    ]

    if not kernels.NUMBA_ENABLED:
        print("warning: numba path disabled (HFELSIM_NO_NUMBA=1); "
              "both columns will use the fallback")

    print(f"{'kernel':<34} {'numba':>12} {'numpy':>12} {'speedup':>9}")
    for name, fast, slow, work in cases:
        t_fast = time_call(fast, work, args.repeats)
        t_slow = time_call(slow, work, args.repeats)
        print(f"{name:<34} {t_fast * 1e6:>10.1f}us {t_slow * 1e6:>10.1f}us "
              f"{t_slow / t_fast:>8.1f}x")


if __name__ == "__main__":
    main()
