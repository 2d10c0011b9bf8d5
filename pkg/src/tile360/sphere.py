"""Unit-sphere geometry, viewpoint codebooks and trajectory metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .media import ViewpointLog

UNIT_TOL = 1e-6
CENTER = np.array([1.0, 0.0, 0.0])  # lat 0, lon 0


def _as_unit(v, name="vector") -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norms = np.linalg.norm(v, axis=-1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise ValueError(f"{name} must be unit norm (got norm {np.max(np.abs(norms - 1.0)) + 1:.6g})")
    return v


def latlon_to_vec(lat_deg, lon_deg) -> np.ndarray:
    lat = np.radians(lat_deg)
    lon = np.radians(lon_deg)
    return np.stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=-1)


def vec_to_latlon(v) -> tuple[np.ndarray, np.ndarray]:
    v = np.asarray(v, dtype=np.float64)
    lat = np.degrees(np.arcsin(np.clip(v[..., 2], -1.0, 1.0)))
    lon = np.degrees(np.arctan2(v[..., 1], v[..., 0]))
    return lat, lon


def _angles(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # atan2 form stays accurate near 0 and pi, where arccos of the dot loses digits
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    return np.arctan2(cross, np.sum(a * b, axis=-1))


def great_circle_distance(a, b) -> float:
    a = _as_unit(a, "a")
    b = _as_unit(b, "b")
    return float(_angles(a, b))


def avg_great_circle_distance(pred, truth) -> float:
    pred = _as_unit(np.asarray(pred, dtype=np.float64).reshape(-1, 3), "pred")
    truth = _as_unit(np.asarray(truth, dtype=np.float64).reshape(-1, 3), "truth")
    if pred.shape != truth.shape or pred.shape[0] == 0:
        raise ValueError("trajectories must have equal, non-zero length")
    return float(np.mean(_angles(pred, truth)))


@dataclass(frozen=True)
class PredictionSet:
    trajectories: np.ndarray  # (I, B, 3)
    probabilities: np.ndarray  # (I,)

    def __post_init__(self):
        traj = np.array(self.trajectories, dtype=np.float64)
        if traj.ndim == 2:
            traj = traj[:, None, :]
        probs = np.array(self.probabilities, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "trajectories", traj)
        object.__setattr__(self, "probabilities", probs)
        if traj.ndim != 3 or traj.shape[0] != probs.shape[0] or traj.shape[2] != 3:
            raise ValueError("trajectories must be (I, B, 3) with one probability each")
        _as_unit(traj, "trajectory point")
        if np.any(probs <= 0):
            raise ValueError("probabilities must be strictly positive")
        if np.any(np.diff(probs) > 0):
            raise ValueError("probabilities must be sorted descending")
        if probs.sum() > 1 + 1e-9:
            raise ValueError("probabilities sum above 1")

    @property
    def count(self) -> int:
        return self.trajectories.shape[0]

    @property
    def horizon(self) -> int:
        return self.trajectories.shape[1]

    def first_points(self) -> np.ndarray:
        return self.trajectories[:, 0, :]


def best_of_many(preds: PredictionSet, truth) -> float:
    truth = np.asarray(truth, dtype=np.float64).reshape(-1, 3)
    if preds.horizon != truth.shape[0]:
        raise ValueError("prediction horizon differs from truth length")
    return min(avg_great_circle_distance(tr, truth) for tr in preds.trajectories)


def baseline_predict(history, horizon: int, count: int) -> PredictionSet:
    """Repeat the last observed viewpoint; ``count`` identical candidates."""
    history = np.asarray(history, dtype=np.float64).reshape(-1, 3)
    if history.shape[0] == 0:
        raise ValueError("history is empty")
    last = _as_unit(history[-1], "history point")
    traj = np.broadcast_to(last, (count, horizon, 3)).copy()
    return PredictionSet(traj, np.full(count, 1.0 / count))


@dataclass(frozen=True)
class Codebook:
    centroids: np.ndarray  # (K, 3)
    inertia_history: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        c = np.array(self.centroids, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "centroids", c)
        if np.any(np.abs(np.linalg.norm(c, axis=1) - 1.0) > 1e-9):
            raise ValueError("centroids must be unit norm")
        if c.shape[0] > 1:
            d = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=2)
            d[np.diag_indices_from(d)] = np.inf
            if d.min() <= 1e-9:
                raise ValueError("duplicate centroids")

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write(f"{self.K}\n")
            for x, y, z in self.centroids:
                fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")

    @classmethod
    def load(cls, path: str | Path) -> "Codebook":
        with open(path) as fh:
            lines = [ln.split() for ln in fh if ln.strip()]
        k = int(lines[0][0])
        c = np.array([[float(x) for x in ln] for ln in lines[1 : k + 1]])
        if c.shape != (k, 3):
            raise ValueError(f"{path}: expected {k} centroid rows")
        return cls(c / np.linalg.norm(c, axis=1, keepdims=True))


def _inertia(points, centroids, labels) -> float:
    diff = points - centroids[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def kmeans_fit(points, K: int, seed: int = 0, max_iter: int = 100) -> Codebook:
    """Spherical Lloyd iterations; centroids are renormalised after every update.

    Initial centroids are ``K`` distinct input points picked with ``seed``.
    Empty clusters keep their previous centroid.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if points.shape[0] == 0:
        raise ValueError("no points to cluster")
    if K <= 0:
        raise ValueError("K must be positive")
    _as_unit(points, "point")
    distinct = np.unique(points, axis=0)
    if distinct.shape[0] < K:
        raise ValueError(f"need at least K={K} distinct points, got {distinct.shape[0]}")
    rng = np.random.default_rng(seed)
    centroids = distinct[np.sort(rng.choice(distinct.shape[0], size=K, replace=False))].copy()
    labels = _kernels.assign_nearest(points, centroids)
    history = [_inertia(points, centroids, labels)]
    for _ in range(max_iter):
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, points)
        norms = np.linalg.norm(sums, axis=1)
        ok = norms > 1e-12
        centroids[ok] = sums[ok] / norms[ok, None]
        new_labels = _kernels.assign_nearest(points, centroids)
        history.append(_inertia(points, centroids, new_labels))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return Codebook(centroids, tuple(history))


def quantize(point, codebook: Codebook) -> int:
    """Nearest centroid index (chord and arc distance agree); lowest index wins ties."""
    p = _as_unit(np.asarray(point, dtype=np.float64).reshape(1, 3), "point")
    return int(_kernels.assign_nearest(p, codebook.centroids)[0])


def quantize_many(points, codebook: Codebook) -> np.ndarray:
    return _kernels.assign_nearest(np.asarray(points, dtype=np.float64).reshape(-1, 3), codebook.centroids)


def _rotate(v: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    # Rodrigues rotation
    return v * math.cos(angle) + np.cross(axis, v) * math.sin(angle) + axis * np.dot(axis, v) * (1 - math.cos(angle))


def synthetic_trajectory(
    seed: int,
    duration_s: float = 60.0,
    sample_rate_hz: float = 5.0,
    speed_deg_s: float = 15.0,
    jump_prob: float = 0.05,
) -> ViewpointLog:
    """Random great-circle walk starting at the centre, with occasional fast turns."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate_hz))
    dt = 1.0 / sample_rate_hz
    v = CENTER.copy()
    heading = rng.normal(size=3)
    out = np.empty((n, 3))
    speed = speed_deg_s
    for i in range(n):
        out[i] = v
        if rng.random() < jump_prob:
            heading = rng.normal(size=3)
            speed = speed_deg_s * rng.uniform(3.0, 6.0)
        elif rng.random() < 0.2:
            speed = speed_deg_s * rng.uniform(0.0, 1.5)
        heading = heading + rng.normal(scale=0.3, size=3)
        axis = np.cross(v, heading)
        norm = np.linalg.norm(axis)
        if norm < 1e-9:
            continue
        axis /= norm
        v = _rotate(v, axis, math.radians(speed) * dt)
        v /= np.linalg.norm(v)
        # keep latitude modest, as real viewers rarely look straight up/down
        lat, lon = vec_to_latlon(v)
        if abs(lat) > 70:
            v = latlon_to_vec(np.sign(lat) * 70, lon)
    return ViewpointLog(np.arange(n) * dt, out, sample_rate_hz)


def softmax(x, axis=-1):
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def scaled_attention_weights(queries, keys, d_k: int) -> np.ndarray:
    """Row-wise softmax of (q / sqrt(d_k)) k^T."""
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    k = np.atleast_2d(np.asarray(keys, dtype=np.float64))
    if q.shape[-1] != k.shape[-1]:
        raise ValueError("query and key widths differ")
    return softmax((q / math.sqrt(d_k)) @ k.T, axis=-1)


def spatial_attention(queries, keys, d_k: int) -> np.ndarray:
    """Attention of each patch query over the Z patch keys of the same frame."""
    return scaled_attention_weights(queries, keys, d_k)


def temporal_attention(queries, keys, d_k: int) -> np.ndarray:
    """Attention of each frame-level query over the F frame keys."""
    return scaled_attention_weights(queries, keys, d_k)


def top_i_decode(step_probabilities, count: int, codebook: Codebook) -> PredictionSet:
    """Top-``count`` classes at the first step, each continued with the greedy classes.

    The trajectory probability is the first-step probability of its class.
    """
    probs = np.asarray(step_probabilities, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] != codebook.K:
        raise ValueError("step probabilities must be (B, K)")
    if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
        raise ValueError("step probabilities must be simplex vectors")
    order = np.argsort(-probs[0], kind="stable")[:count]
    tail = np.argmax(probs[1:], axis=1) if probs.shape[0] > 1 else np.zeros(0, dtype=int)
    trajs = []
    for cls in order:
        path = np.concatenate([[cls], tail]).astype(int)
        trajs.append(codebook.centroids[path])
    return PredictionSet(np.array(trajs), probs[0, order])
