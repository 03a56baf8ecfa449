"""Hot numeric kernels, JIT-compiled with numba when available.

Setting the environment variable ``HFELSIM_NO_NUMBA=1`` (or running
without numba installed) selects the pure-numpy fallback path. Both paths
execute the same source; ``benchmarks/bench_kernels.py`` compares them.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["NUMBA_ENABLED", "sgd_steps", "alloc_at_deadline"]

_FREQ_EPS = 1e-12
_BISECT_ITERS = 60


def _sgd_steps(w, xa, labels, batch_idx, lr, momentum):
    """Run momentum-SGD steps of softmax regression on one shard.

    w          (d+1, k) weight matrix (bias row included), not mutated
    xa         (n, d+1) feature matrix with appended bias column
    labels     (n,) int class indices
    batch_idx  (iters, batch) pre-drawn sample indices
    Returns the updated weight matrix.
    """
    v = np.zeros_like(w)
    iters, batch = batch_idx.shape
    k = w.shape[1]
    for s in range(iters):
        idx = batch_idx[s]
        xb = xa[idx]
        z = xb @ w
        for i in range(batch):
            m = z[i].max()
            tot = 0.0
            for j in range(k):
                z[i, j] = np.exp(z[i, j] - m)
                tot += z[i, j]
            for j in range(k):
                z[i, j] /= tot
            z[i, labels[idx[i]]] -= 1.0
        g = xb.T @ z / batch
        v = momentum * v + g
        w = w - lr * v
    return w


def _alloc_at_deadline(tau, cycles, alpha, power, fmin, fmax, caps,
                       log_rate, model_bits):
    """Per-device minimal bandwidth and best frequency for a deadline.

    For each device the transmission is assumed to fill the window
    ``tau - comp_time`` exactly, which makes the required bandwidth the
    minimum compatible with the deadline. Window energy
    p*(tau - K/f) + (alpha/2)*K*f^2 is strictly increasing in f while the
    bandwidth demand is strictly decreasing, so the largest energy-feasible
    frequency is optimal; it is found by monotone bisection.

    Returns (status, device, b, f) where status 0 means feasible per
    device (b, f filled), 1 means the deadline is below the compute time
    at f_max, 2 means the energy cap cannot be met; ``device`` is the
    offending index for nonzero status.
    """
    n = cycles.shape[0]
    b = np.zeros(n)
    f = np.zeros(n)
    for i in range(n):
        floor = cycles[i] / tau * (1.0 + _FREQ_EPS)
        lo = fmin[i] if fmin[i] > floor else floor
        if lo > fmax[i]:
            return 1, i, b, f
        e_lo = power[i] * (tau - cycles[i] / lo) \
            + 0.5 * alpha[i] * cycles[i] * lo * lo
        if e_lo > caps[i]:
            return 2, i, b, f
        hi = fmax[i]
        e_hi = power[i] * (tau - cycles[i] / hi) \
            + 0.5 * alpha[i] * cycles[i] * hi * hi
        if e_hi <= caps[i]:
            best = hi
        else:
            a = lo
            c = hi
            for _ in range(_BISECT_ITERS):
                mid = 0.5 * (a + c)
                e_mid = power[i] * (tau - cycles[i] / mid) \
                    + 0.5 * alpha[i] * cycles[i] * mid * mid
                if e_mid <= caps[i]:
                    a = mid
                else:
                    c = mid
            best = a
        f[i] = best
        b[i] = model_bits / ((tau - cycles[i] / best) * log_rate[i])
    return 0, -1, b, f


NUMBA_ENABLED = os.environ.get("HFELSIM_NO_NUMBA", "0") != "1"
if NUMBA_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False

if NUMBA_ENABLED:
    sgd_steps = njit(cache=True)(_sgd_steps)
    alloc_at_deadline = njit(cache=True)(_alloc_at_deadline)
else:
    sgd_steps = _sgd_steps
    alloc_at_deadline = _alloc_at_deadline
