"""Pure-Python reference versions of the hot loops.

These are the fallback when the compiled extension is unavailable and the
baseline that ``benchmarks/bench_kernels.py`` measures against.
"""

import math

import numpy as np


def discounted_returns(rewards, bootstrap_value, gamma):
    rewards = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(rewards)
    running = float(bootstrap_value)
    for t in range(rewards.shape[0] - 1, -1, -1):
        running = rewards[t] + gamma * running
        out[t] = running
    return out


def gae(rewards, values, bootstrap_value, gamma, lam):
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    n = rewards.shape[0]
    out = np.empty(n, dtype=np.float64)
    running = 0.0
    next_value = float(bootstrap_value)
    for t in range(n - 1, -1, -1):
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        out[t] = running
        next_value = values[t]
    return out


def download_time(size_mb, times, rates, period, start):
    """Invert the cumulative integral of a looping step trace."""
    if size_mb <= 0.0:
        return 0.0
    times = np.asarray(times, dtype=np.float64)
    rates = np.asarray(rates, dtype=np.float64)
    n = times.shape[0]
    if math.isinf(period):
        # single-sample trace: constant rate forever
        return size_mb / rates[0]
    base = math.floor(start / period) * period
    local = start - base
    idx = int(np.searchsorted(times, local, side="right")) - 1
    remaining = size_mb
    clock = local
    elapsed = 0.0
    while True:
        seg_end = times[idx + 1] if idx + 1 < n else period
        avail = (seg_end - clock) * rates[idx]
        if avail >= remaining:
            return elapsed + remaining / rates[idx]
        remaining -= avail
        elapsed += seg_end - clock
        clock = seg_end
        idx += 1
        if idx >= n:
            idx = 0
            clock = 0.0


def assign_nearest(points, centroids):
    """Index of the centroid with the largest dot product; lowest index on ties."""
    points = np.asarray(points, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    out = np.empty(points.shape[0], dtype=np.int64)
    for i in range(points.shape[0]):
        best = 0
        best_dot = -math.inf
        px, py, pz = points[i]
        for j in range(centroids.shape[0]):
            d = px * centroids[j, 0] + py * centroids[j, 1] + pz * centroids[j, 2]
            if d > best_dot:
                best_dot = d
                best = j
        out[i] = best
    return out
