"""Synthetic stand-ins for the video, trace and head-movement datasets."""

from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np

from .env import EnvConfig, OraclePredictor, StreamingEnv, write_prediction_fixture
from .media import (
    NetworkTrace,
    VideoManifest,
    ViewpointLog,
    generate_manifest,
    generate_trace,
    write_manifest,
    write_trace,
    write_viewpoint_log,
)
from .madrl.trainer import TrainConfig
from .qoe import QoEWeights
from .sphere import PredictionSet, latlon_to_vec, synthetic_trajectory

TOY_PROBABILITIES = (0.6, 0.25, 0.15)


def constant_trace(mbps: float, name: str = "constant") -> NetworkTrace:
    return NetworkTrace(np.array([0.0]), np.array([mbps]), 0.0, name=name)


def predictions_from_log(
    log: ViewpointLog,
    segments: int,
    probabilities=TOY_PROBABILITIES,
    seed: int = 0,
    spread_deg: float = 40.0,
    segment_duration_s: float = 1.0,
) -> list[PredictionSet]:
    """Per segment: the true viewpoint at segment start plus perturbed alternatives."""
    rng = np.random.default_rng(seed)
    sets = []
    probs = np.asarray(probabilities, dtype=np.float64)
    for s in range(segments):
        idx = min(np.searchsorted(log.times, s * segment_duration_s), len(log.times) - 1)
        truth = log.vectors[idx]
        lat = np.degrees(np.arcsin(np.clip(truth[2], -1, 1)))
        lon = np.degrees(np.arctan2(truth[1], truth[0]))
        pts = [truth]
        for _ in range(len(probs) - 1):
            dlat, dlon = rng.normal(0.0, spread_deg / 2), rng.normal(0.0, spread_deg)
            pts.append(latlon_to_vec(np.clip(lat + dlat, -80, 80), lon + dlon))
        sets.append(PredictionSet(np.array(pts)[:, None, :], probs))
    return sets


def toy_predictions(segments: int = 20) -> list[PredictionSet]:
    """Three fixed, non-overlapping viewpoints (lon -120, 0, 120) on the equator."""
    pts = latlon_to_vec(np.zeros(3), np.array([0.0, 120.0, -120.0]))
    ps = PredictionSet(pts[:, None, :], np.array(TOY_PROBABILITIES))
    return [ps] * segments


def toy_environment(
    weights: QoEWeights | None = None,
    segments: int = 20,
    mbps: float = 20.0,
    seed: int = 7,
) -> StreamingEnv:
    """Deterministic check environment: constant trace, scripted predictions, 6x12 tiles."""
    manifest = generate_manifest(seed=seed, segments=segments)
    config = EnvConfig(
        manifest=manifest,
        trace=constant_trace(mbps),
        predictor=OraclePredictor(toy_predictions(segments)),
        weights=weights or QoEWeights(1, 1, 1, 1),
        agents=3,
    )
    return StreamingEnv(config)


def toy_train_config(mode: str = "mappo", seed: int = 0, episodes: int = 2000) -> TrainConfig:
    """Settings that solve the toy environment.

    Rewards are scaled down and the entropy bonus is large: with little
    exploration the policy settles one rung below the top, because a single
    exploratory step up costs two temporal-variation penalties.
    """
    return TrainConfig(
        mode=mode,
        seed=seed,
        episodes=episodes,
        reward_scale=0.03,
        actor_lr=3e-4,
        critic_lr=1e-3,
        entropy_coef=0.3,
    )


def greedy_optimum(env: StreamingEnv) -> tuple[float, list[tuple[int, ...]]]:
    """Mean reward of the per-step best joint action found by full enumeration.

    At every step all N^I joint actions are tried on clones of the current
    state and the best immediate reward is kept.
    """
    env.reset()
    joint = list(itertools.product(range(env.n_actions), repeat=env.n_agents))
    rewards, chosen = [], []
    while not env.done:
        best_r, best_a = -np.inf, None
        for a in joint:
            trial = env.clone()
            _, r, _, _ = trial.step(a)
            if r > best_r:
                best_r, best_a = r, a
        env.step(best_a)
        rewards.append(best_r)
        chosen.append(best_a)
    return float(np.mean(rewards)), chosen


def write_fixture_set(
    out_dir: str | Path,
    seed: int = 7,
    n_traces: int = 20,
    segments: int = 60,
    agents: int = 3,
) -> dict[str, Path]:
    """Manifest, trace directory, viewpoint log and prediction fixture under ``out_dir``."""
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    manifest: VideoManifest = generate_manifest(seed=seed, segments=segments)
    write_manifest(manifest, out / "manifest.txt")
    for i in range(n_traces):
        write_trace(generate_trace(seed * 1000 + i, duration_s=max(3 * segments, 120)), out / "traces" / f"trace_{i:03d}.txt")
    log = synthetic_trajectory(seed, duration_s=segments + 1.0)
    write_viewpoint_log(log, out / "viewpoints.txt")
    probs = TOY_PROBABILITIES if agents == 3 else tuple(np.linspace(2, 1, agents) / np.linspace(2, 1, agents).sum())
    write_prediction_fixture(predictions_from_log(log, segments, probs, seed), out / "predictions.txt")
    return {
        "manifest": out / "manifest.txt",
        "traces": out / "traces",
        "viewpoints": out / "viewpoints.txt",
        "predictions": out / "predictions.txt",
    }
