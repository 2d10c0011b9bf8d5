"""Slow, independent reference implementations used by ``verify`` and the tests.

Nothing here imports the production code paths it checks: each function
recomputes its quantity by a different method (explicit loops, numerical
integration, sampling or enumeration).
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np


def qoe_reference(weights, psi, q, q_prev, rebuffer_s):
    """Loop form of the four QoE terms and the weighted total."""
    n = len(psi)
    quality = sum(psi[i] * q[i] for i in range(n))
    temporal = 0.0 if q_prev is None else sum(psi[i] * abs(q[i] - q_prev[i]) for i in range(n))
    spatial = 0.0
    for i in range(n):
        for j in range(n):
            spatial += psi[i] * psi[j] * abs(q[i] - q[j])
    spatial *= 0.5
    a1, a2, a3, a4 = weights
    total = a1 * quality - a2 * temporal - a3 * spatial - a4 * rebuffer_s
    return quality, temporal, spatial, rebuffer_s, total


def rebuffer_reference(download_s, buffer_s, duration_s):
    x = download_s - buffer_s + duration_s
    return x if x > 0 else 0.0


def piecewise_download_time(size_mb, times, rates, start_s, period=None):
    """Walk the step trace interval by interval until ``size_mb`` is delivered."""
    times = [float(t) for t in times]
    rates = [float(r) for r in rates]
    if size_mb <= 0:
        return 0.0
    if period is None:
        period = math.inf if len(times) == 1 else times[-1] + (times[-1] - times[-2])
    if not math.isfinite(period):
        return size_mb / rates[0]
    ends = times[1:] + [period]
    cycle, phase = divmod(float(start_s), period)
    k = max(i for i in range(len(times)) if times[i] <= phase)
    remaining = float(size_mb)
    elapsed = 0.0
    pos = phase
    while True:
        span = ends[k] - pos
        if rates[k] * span >= remaining:
            return elapsed + remaining / rates[k]
        remaining -= rates[k] * span
        elapsed += span
        k = (k + 1) % len(times)
        pos = times[k]


def returns_double_sum(rewards, bootstrap, gamma):
    T = len(rewards)
    return np.array(
        [sum(gamma ** (i - t) * rewards[i] for i in range(t, T)) + gamma ** (T - t) * bootstrap for t in range(T)]
    )


def gae_double_sum(rewards, values, bootstrap, gamma, lam):
    """A_t = sum_l (gamma lam)^l delta_{t+l}, each delta written out."""
    T = len(rewards)
    v = list(values) + [bootstrap]
    deltas = [rewards[t] + gamma * v[t + 1] - v[t] for t in range(T)]
    return np.array([sum((gamma * lam) ** l * deltas[t + l] for l in range(T - t)) for t in range(T)])


def clip_surrogate_reference(ratio, adv, eps):
    g = (1 + eps) * adv if adv >= 0 else (1 - eps) * adv
    return min(ratio * adv, g)


def footprint_by_sampling(lat, lon, rows, cols, fov, step=0.25):
    """Tiles with some sample point strictly inside the FOV rectangle.

    Samples sit at odd multiples of ``step / 2``. For viewpoints on the
    0.25 degree lattice and FOV sizes on the 0.5 degree lattice every
    rectangle edge falls between samples, and any positive overlap holds at
    least one sample.
    """
    h, v = fov
    tiles = set()
    tile_h, tile_w = 180.0 / rows, 360.0 / cols
    for r in range(rows):
        top = 90 - r * tile_h
        lats = np.arange(top - step / 2, top - tile_h, -step)
        lat_in = np.abs(lats - lat) < v / 2
        if not lat_in.any():
            continue
        for c in range(cols):
            left = -180 + c * tile_w
            lons = np.arange(left + step / 2, left + tile_w, step)
            dlon = (lons - lon + 180.0) % 360.0 - 180.0
            if h >= 360 or (np.abs(dlon) < h / 2).any():
                tiles.add(r * cols + c)
    return frozenset(tiles)


def partition_reference(footprints: Sequence[frozenset], probabilities, n_tiles):
    """Stable sort by descending probability, then set subtraction."""
    order = sorted(range(len(footprints)), key=lambda i: -probabilities[i])
    claimed: set[int] = set()
    regions = [frozenset()] * len(footprints)
    for i in order:
        regions[i] = frozenset(footprints[i] - claimed)
        claimed |= footprints[i]
    return regions, frozenset(range(n_tiles)) - claimed


def central_difference(f: Callable[[], float], params: Sequence[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    """Numerical gradient of ``f`` w.r.t. every entry of every array, perturbed in place."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            up = f()
            flat[k] = old - h
            down = f()
            flat[k] = old
            gflat[k] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def relative_error(analytic: Sequence[np.ndarray], numeric: Sequence[np.ndarray]) -> float:
    """max-norm of the difference over the larger max-norm of the two gradients."""
    a = np.concatenate([np.ravel(x) for x in analytic])
    n = np.concatenate([np.ravel(x) for x in numeric])
    scale = max(np.max(np.abs(a)), np.max(np.abs(n)), 1e-12)
    return float(np.max(np.abs(a - n)) / scale)


def mpc_single_step_reference(region_sizes, rest_size, psi, ladder, buffer_s, prev_q, throughput, weights, duration_s):
    """Argmax over uniform rungs of the one-step QoE, lowest rung on ties (1e-9 relative)."""
    best, best_rung = -math.inf, 0
    for rung in range(len(ladder)):
        size = sum(region_sizes[i][rung] for i in range(len(psi))) + rest_size
        dl = size / throughput
        rebuf = rebuffer_reference(dl, buffer_s, duration_s)
        q = [ladder[rung]] * len(psi)
        total = qoe_reference(weights, psi, q, prev_q, rebuf)[-1]
        if best == -math.inf or total > best + 1e-9 * max(1.0, abs(best)):
            best, best_rung = total, rung
    return best_rung
