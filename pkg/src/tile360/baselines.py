"""Rule-based comparison policies: BB, RB, MPC and Dynamic.

Each ``*_policy`` factory returns ``act(env, obs) -> (joint_action, rest_rung)``
so it can be played through ``madrl.run_episode`` like a learned policy.
All of them give every viewport region the same rung.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qoe import QoEWeights, qoe_total, rebuffer_time

# plan values closer than this (relative) are treated as equal
TIE_TOL = 1e-9


@dataclass(frozen=True)
class BaselineConfig:
    bb_low_s: float = 5.0
    bb_high_s: float = 15.0
    rb_history: int = 5
    mpc_horizon: int = 3
    dynamic_threshold_s: float = 10.0

    def __post_init__(self):
        if not self.bb_low_s < self.bb_high_s:
            raise ValueError("bb_low_s must be below bb_high_s")
        if self.mpc_horizon < 1:
            raise ValueError("MPC horizon must be >= 1")
        if self.rb_history < 1:
            raise ValueError("rb_history must be >= 1")


def bb_select(buffer_s: float, ladder: Sequence[float], low_s: float = 5.0, high_s: float = 15.0) -> int:
    """Lowest rung below ``low_s``, highest above ``high_s``.

    In between, ``floor((b - low) / (high - low) * (N - 1))`` so the map runs
    from rung 0 at ``low_s`` to rung N-1 at ``high_s``.
    """
    if buffer_s < 0:
        raise ValueError("buffer must be non-negative")
    n = len(ladder)
    if buffer_s < low_s:
        return 0
    if buffer_s > high_s:
        return n - 1
    return int(math.floor((buffer_s - low_s) / (high_s - low_s) * (n - 1)))


def harmonic_mean(values: Sequence[float]) -> float:
    v = np.asarray(values, dtype=np.float64)
    return float(v.size / np.sum(1.0 / v))


def rb_select(throughput_history: Sequence[float], ladder: Sequence[float], k: int | None = None) -> int:
    """Highest rung whose bitrate does not exceed the harmonic-mean throughput."""
    hist = np.asarray(throughput_history, dtype=np.float64)
    if hist.size == 0:
        raise ValueError("throughput history is empty")
    if k is not None:
        hist = hist[-k:]
    estimate = harmonic_mean(hist)
    rung = 0
    for i, rate in enumerate(ladder):
        if rate <= estimate:
            rung = i
    return rung


def _valid_history(env, k: int) -> np.ndarray:
    hist = env.throughput_hist[env.throughput_hist > 0]
    return hist[-k:]


def mpc_plan(
    region_sizes: np.ndarray,
    rest_size: float,
    psi: Sequence[float],
    ladder: Sequence[float],
    buffer_s: float,
    prev_q,
    throughput: float,
    weights: QoEWeights,
    horizon: int,
    segment_duration_s: float = 1.0,
    max_buffer_s: float = math.inf,
) -> tuple[int, float]:
    """Best first rung over all uniform-rung sequences of length ``horizon``.

    The current region sizes and probabilities stand in for every future
    segment and the throughput is held constant. Values within ``TIE_TOL``
    of each other count as ties, which go to the lower rung.
    """
    n = len(ladder)
    ladder_arr = np.asarray(ladder, dtype=np.float64)
    n_regions = region_sizes.shape[0]
    seg_size = region_sizes.sum(axis=0) + rest_size  # size at each uniform rung
    best_value, best_first = -math.inf, 0
    for seq in itertools.product(range(n), repeat=horizon):
        b = buffer_s
        q_prev = None if prev_q is None else np.asarray(prev_q, dtype=np.float64)
        total = 0.0
        for rung in seq:
            dl = seg_size[rung] / throughput if throughput > 0 else math.inf
            rebuf = rebuffer_time(dl, b, segment_duration_s)
            q = np.full(n_regions, ladder_arr[rung])
            total += qoe_total(weights, psi, q, q_prev, rebuf).total
            b = min(max(b - dl, 0.0) + segment_duration_s, max_buffer_s)
            q_prev = q
        if best_value == -math.inf or total > best_value + TIE_TOL * max(1.0, abs(best_value)):
            best_value, best_first = total, seq[0]
    return best_first, best_value


def mpc_select(env, horizon: int = 3, history: int = 5) -> int:
    hist = _valid_history(env, history)
    if hist.size == 0:
        return 0
    rest = [t for t in env.assignment.rest]
    rest_size = float(env.manifest.tile_sizes[env.t, rest, 0].sum()) if rest else 0.0
    rung, _ = mpc_plan(
        env.region_sizes,
        rest_size,
        env.psi,
        env.manifest.ladder,
        env.buffer_s,
        env.prev_q,
        harmonic_mean(hist),
        env.config.weights,
        horizon,
        env.manifest.segment_duration_s,
        env.config.max_buffer_s,
    )
    return rung


def dynamic_select(buffer_s: float, throughput_history, ladder, config: BaselineConfig = BaselineConfig()) -> int:
    """BB above the buffer threshold (strictly), RB otherwise."""
    if buffer_s > config.dynamic_threshold_s:
        return bb_select(buffer_s, ladder, config.bb_low_s, config.bb_high_s)
    hist = np.asarray(throughput_history, dtype=np.float64)
    hist = hist[hist > 0]
    if hist.size == 0:
        return 0
    return rb_select(hist, ladder, config.rb_history)


def bb_policy(config: BaselineConfig = BaselineConfig()):
    def act(env, obs):
        rung = bb_select(env.buffer_s, env.manifest.ladder, config.bb_low_s, config.bb_high_s)
        # BB rates the whole frame, rest region included
        return np.full(env.n_agents, rung), rung

    return act


def rb_policy(config: BaselineConfig = BaselineConfig()):
    def act(env, obs):
        hist = _valid_history(env, config.rb_history)
        rung = rb_select(hist, env.manifest.ladder) if hist.size else 0
        return np.full(env.n_agents, rung), 0

    return act


def mpc_policy(config: BaselineConfig = BaselineConfig()):
    def act(env, obs):
        return np.full(env.n_agents, mpc_select(env, config.mpc_horizon, config.rb_history)), 0

    return act


def dynamic_policy(config: BaselineConfig = BaselineConfig()):
    def act(env, obs):
        rung = dynamic_select(env.buffer_s, env.throughput_hist, env.manifest.ladder, config)
        return np.full(env.n_agents, rung), 0

    return act


POLICIES = {"bb": bb_policy, "rb": rb_policy, "mpc": mpc_policy, "dynamic": dynamic_policy}
