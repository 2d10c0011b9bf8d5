"""Trace-driven multi-agent streaming environment.

One agent per predicted viewport region picks that region's ladder index for
the next segment. Tiles outside every region are fetched at the lowest rung.
The team reward is the weighted QoE of the downloaded segment.

Episode log columns (tab separated, header line first)::

    segment a_1..a_I psi_1..psi_I q_1..q_I qoe1 qoe2 qoe3 qoe4 total
    buffer_s download_s rebuffer_s wait_s clock_s size_mb local_1..local_I
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .media import NetworkTrace, VideoManifest, ViewpointLog, download_time, region_size_table, segment_size
from .qoe import QoEBreakdown, QoEWeights, qoe_total, rebuffer_time
from .regions import DEFAULT_FOV, RegionAssignment, partition
from .sphere import CENTER, PredictionSet, baseline_predict

THROUGHPUT_SCALE = 100.0  # Mbps
TIME_SCALE = 10.0  # s
SIZE_SCALE = 10.0  # Mb


class EnvError(RuntimeError):
    pass


class Predictor(Protocol):
    count: int

    def predict(self, segment: int) -> PredictionSet: ...


class OraclePredictor:
    """Replays scripted predictions, one PredictionSet per segment (cycled)."""

    def __init__(self, per_segment: Sequence[PredictionSet]):
        if not per_segment:
            raise ValueError("oracle fixture is empty")
        self.per_segment = list(per_segment)
        self.count = self.per_segment[0].count
        if any(p.count != self.count for p in self.per_segment):
            raise ValueError("every segment needs the same number of predictions")

    def predict(self, segment: int) -> PredictionSet:
        return self.per_segment[segment % len(self.per_segment)]


class BaselinePredictor:
    """Last observed viewpoint before the segment; the centre before any sample."""

    def __init__(self, log: ViewpointLog, count: int = 3, segment_duration_s: float = 1.0):
        self.log = log
        self.count = count
        self.segment_duration_s = segment_duration_s

    def predict(self, segment: int) -> PredictionSet:
        start = segment * self.segment_duration_s
        hist = self.log.window(start - self.segment_duration_s, start)
        if hist.shape[0] == 0:
            hist = CENTER[None, :]
        return baseline_predict(hist, 1, self.count)


class ModelPredictor:
    """Runs a trained ViewpointTransformer on the quantised viewpoint history."""

    def __init__(self, model, codebook, log: ViewpointLog, count: int = 3, frames=None, segment_duration_s: float = 1.0):
        from .sphere import quantize_many

        self.model = model
        self.codebook = codebook
        self.log = log
        self.count = count
        self.frames = frames  # callable segment -> (F, H, W, C) array, or None for zeros
        self.segment_duration_s = segment_duration_s
        self._quantize = quantize_many

    def predict(self, segment: int) -> PredictionSet:
        from .attention import predict_trajectories

        cfg = self.model.config
        start = segment * self.segment_duration_s
        hist = self.log.window(start - self.segment_duration_s, start)
        if hist.shape[0] == 0:
            hist = CENTER[None, :]
        classes = self._quantize(hist, self.codebook)[-cfg.history :]
        classes = np.concatenate([np.full(cfg.history - classes.size, classes[0]), classes])
        if self.frames is None:
            frames = np.zeros((cfg.frames, cfg.frame_height, cfg.frame_width, cfg.channels))
        else:
            frames = self.frames(segment)
        return predict_trajectories(self.model, frames, classes, self.count, self.codebook)


def load_prediction_fixture(path: str | Path) -> OraclePredictor:
    """``I segments`` header, then per segment I lines of ``prob x y z``."""
    with open(path) as fh:
        rows = [ln.split("#", 1)[0].split() for ln in fh]
    rows = [r for r in rows if r]
    count, segments = int(rows[0][0]), int(rows[0][1])
    body = np.array([[float(x) for x in r] for r in rows[1:]], dtype=np.float64)
    if body.shape != (count * segments, 4):
        raise ValueError(f"{path}: expected {count * segments} rows of 'prob x y z'")
    sets = []
    for s in range(segments):
        blk = body[s * count : (s + 1) * count]
        vec = blk[:, 1:] / np.linalg.norm(blk[:, 1:], axis=1, keepdims=True)
        sets.append(PredictionSet(vec[:, None, :], blk[:, 0]))
    return OraclePredictor(sets)


def write_prediction_fixture(sets: Sequence[PredictionSet], path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{sets[0].count} {len(sets)}\n")
        for ps in sets:
            for p, (x, y, z) in zip(ps.probabilities, ps.first_points()):
                fh.write(f"{float(p)!r} {float(x)!r} {float(y)!r} {float(z)!r}\n")


@dataclass
class EnvConfig:
    manifest: VideoManifest
    trace: NetworkTrace
    predictor: Predictor
    weights: QoEWeights = field(default_factory=QoEWeights)
    agents: int = 3
    history_len: int = 8
    max_buffer_s: float = 60.0
    fov: tuple[float, float] = DEFAULT_FOV
    seed: int = 0
    signed_variation: bool = False
    random_trace_start: bool = False

    def validate(self) -> None:
        if self.agents < 1:
            raise ValueError("need at least one agent")
        if self.history_len < 1:
            raise ValueError("history_len must be >= 1")
        if not self.max_buffer_s > self.manifest.segment_duration_s:
            raise ValueError("max_buffer_s must exceed the segment duration")
        if self.predictor.count != self.agents:
            raise ValueError(f"predictor yields {self.predictor.count} trajectories, config has {self.agents} agents")


@dataclass
class StepRecord:
    segment: int
    actions: tuple[int, ...]
    psi: tuple[float, ...]
    q: tuple[float, ...]
    breakdown: QoEBreakdown
    buffer_s: float
    download_s: float
    rebuffer_s: float
    wait_s: float
    clock_s: float
    size_mb: float
    local_rewards: tuple[float, ...]


class StreamingEnv:
    def __init__(self, config: EnvConfig):
        config.validate()
        self.config = config
        self.manifest = config.manifest
        self.trace = config.trace
        self.done = True

    # -- sizes ------------------------------------------------------------
    @property
    def obs_dim(self) -> int:
        return 2 * self.config.history_len + 2 * self.manifest.n_rungs + 3

    @property
    def n_actions(self) -> int:
        return self.manifest.n_rungs

    @property
    def n_agents(self) -> int:
        return self.config.agents

    # -- episode ----------------------------------------------------------
    def reset(self, trace: NetworkTrace | None = None, seed: int | None = None):
        if trace is not None:
            self.trace = trace
        seed = self.config.seed if seed is None else seed
        rng = np.random.default_rng(seed)
        k = self.config.history_len
        self.t = 0
        self.buffer_s = 0.0
        self.clock_s = float(rng.uniform(0, self.trace.period)) if (
            self.config.random_trace_start and math.isfinite(self.trace.period)
        ) else 0.0
        self.download_hist = np.zeros(k)
        self.throughput_hist = np.zeros(k)
        self.last_rungs = np.zeros(self.config.agents, dtype=np.int64)
        self.prev_q: np.ndarray | None = None
        self.freezes = 0
        self.log: list[StepRecord] = []
        self.done = False
        self._prepare(0)
        return self.observations()

    def _prepare(self, t: int) -> None:
        preds = self.config.predictor.predict(t)
        m = self.manifest
        self.assignment: RegionAssignment = partition(preds, m.rows, m.cols, self.config.fov, segment=t)
        self.owner = self.assignment.tile_owner(m.n_tiles)
        self.psi = np.asarray(self.assignment.probabilities)
        self.region_sizes = np.stack([region_size_table(m, t, reg) for reg in self.assignment.regions])

    def clone(self) -> "StreamingEnv":
        """Copy sharing the immutable manifest, trace and predictor."""
        new = copy.copy(self)
        for name in ("download_hist", "throughput_hist", "last_rungs", "prev_q"):
            val = getattr(self, name, None)
            setattr(new, name, None if val is None else val.copy())
        new.log = list(self.log)
        return new

    def observations(self) -> np.ndarray:
        """(I, obs_dim) array of per-agent observations."""
        cfg = self.config
        n = self.manifest.n_rungs
        remaining = self.manifest.segments - self.t
        obs = np.zeros((cfg.agents, self.obs_dim))
        k = cfg.history_len
        obs[:, :k] = self.download_hist / TIME_SCALE
        obs[:, k : 2 * k] = self.throughput_hist / THROUGHPUT_SCALE
        if not self.done:
            obs[:, 2 * k : 2 * k + n] = self.region_sizes / SIZE_SCALE
            obs[:, 2 * k + n] = self.psi
        obs[:, 2 * k + n + 1] = remaining / self.manifest.segments
        obs[np.arange(cfg.agents), 2 * k + n + 2 + self.last_rungs] = 1.0
        obs[:, -1] = self.buffer_s / TIME_SCALE
        return obs

    def global_state(self, observations: np.ndarray | None = None) -> np.ndarray:
        obs = self.observations() if observations is None else observations
        state = obs.reshape(-1)
        assert state.shape == (self.config.agents * self.obs_dim,)
        return state

    def tile_rungs(self, joint_action: Sequence[int], rest_rung: int = 0) -> np.ndarray:
        actions = np.asarray(joint_action, dtype=np.int64)
        rungs = np.where(self.owner >= 0, actions[np.maximum(self.owner, 0)], rest_rung)
        return rungs

    def step(self, joint_action: Sequence[int], rest_rung: int = 0):
        """Download the current segment; returns (observations, reward, breakdown, done)."""
        if self.done:
            raise EnvError("step() called on a finished episode; call reset()")
        cfg = self.config
        m = self.manifest
        actions = np.asarray(joint_action, dtype=np.int64).reshape(-1)
        if actions.shape != (cfg.agents,):
            raise EnvError(f"expected {cfg.agents} actions, got {actions.shape[0]}")
        if actions.min() < 0 or actions.max() >= m.n_rungs or not 0 <= rest_rung < m.n_rungs:
            raise EnvError(f"action out of range [0, {m.n_rungs})")
        t = self.t
        size = segment_size(m, t, self.tile_rungs(actions, rest_rung))
        dl = download_time(size, self.trace, self.clock_s)
        rebuf = rebuffer_time(dl, self.buffer_s, m.segment_duration_s)
        q = np.asarray(m.ladder)[actions]
        breakdown = qoe_total(cfg.weights, self.psi, q, self.prev_q, rebuf, cfg.signed_variation)

        buffer = max(self.buffer_s - dl, 0.0) + m.segment_duration_s
        wait = max(buffer - cfg.max_buffer_s, 0.0)
        self.buffer_s = buffer - wait
        self.clock_s += dl + wait
        thr = size / dl if dl > 0 else self.trace.throughput_at(self.clock_s)
        self.download_hist = np.roll(self.download_hist, -1)
        self.download_hist[-1] = dl
        self.throughput_hist = np.roll(self.throughput_hist, -1)
        self.throughput_hist[-1] = thr
        if rebuf > 0:
            self.freezes += 1

        self.log.append(
            StepRecord(
                segment=t,
                actions=tuple(int(a) for a in actions),
                psi=tuple(float(p) for p in self.psi),
                q=tuple(float(x) for x in q),
                breakdown=breakdown,
                buffer_s=self.buffer_s,
                download_s=dl,
                rebuffer_s=rebuf,
                wait_s=wait,
                clock_s=self.clock_s,
                size_mb=size,
                local_rewards=tuple(self.local_rewards(q, rebuf)),
            )
        )
        self.last_rungs = actions.copy()
        self.prev_q = q
        self.t += 1
        self.done = self.t >= m.segments
        if not self.done:
            self._prepare(self.t)
        return self.observations(), breakdown.total, breakdown, self.done

    def local_rewards(self, q: np.ndarray, rebuf: float) -> list[float]:
        """Agent-i share of the team QoE; the shares sum to the team reward."""
        a1, a2, a3, a4 = self.config.weights.as_tuple()
        psi = self.psi
        n = len(psi)
        prev = self.prev_q
        out = []
        for i in range(n):
            temporal = 0.0 if prev is None else psi[i] * abs(q[i] - prev[i])
            spatial = 0.5 * sum(psi[i] * psi[j] * abs(q[i] - q[j]) for j in range(n) if j != i)
            out.append(a1 * psi[i] * q[i] - a2 * temporal - a3 * spatial - a4 * rebuf / n)
        return out


def freeze_frequency(log: Sequence[StepRecord], segments: int | None = None) -> float:
    """Stalled segments over segment count."""
    n = len(log) if segments is None else segments
    if n == 0:
        raise ValueError("empty episode")
    return sum(1 for r in log if r.rebuffer_s > 0) / n


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def episode_log_header(agents: int) -> list[str]:
    cols = ["segment"]
    cols += [f"a_{i + 1}" for i in range(agents)]
    cols += [f"psi_{i + 1}" for i in range(agents)]
    cols += [f"q_{i + 1}" for i in range(agents)]
    cols += ["qoe1", "qoe2", "qoe3", "qoe4", "total", "buffer_s", "download_s", "rebuffer_s", "wait_s", "clock_s", "size_mb"]
    cols += [f"local_{i + 1}" for i in range(agents)]
    return cols


def write_episode_log(log: Sequence[StepRecord], path: str | Path) -> None:
    agents = len(log[0].actions)
    with open(path, "w") as fh:
        fh.write("\t".join(episode_log_header(agents)) + "\n")
        for r in log:
            vals = [str(r.segment)] + [str(a) for a in r.actions]
            vals += [_fmt(x) for x in (*r.psi, *r.q, *r.breakdown.terms(), r.breakdown.total)]
            vals += [_fmt(x) for x in (r.buffer_s, r.download_s, r.rebuffer_s, r.wait_s, r.clock_s, r.size_mb)]
            vals += [_fmt(x) for x in r.local_rewards]
            fh.write("\t".join(vals) + "\n")


def read_episode_log(path: str | Path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        rows = [ln.rstrip("\n").split("\t") for ln in fh if ln.strip()]
    data = np.array(rows, dtype=np.float64).reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}
