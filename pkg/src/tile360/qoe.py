"""Per-segment QoE: viewport quality minus temporal, spatial and rebuffer penalties.

Qualities are region bitrates in Mbps; rebuffering is in seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class QoEWeights:
    quality: float = 1.0
    temporal: float = 1.0
    spatial: float = 1.0
    rebuffer: float = 1.0

    def __post_init__(self):
        for v in self.as_tuple():
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"QoE weights must be finite and non-negative, got {self.as_tuple()}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.quality, self.temporal, self.spatial, self.rebuffer)

    @classmethod
    def preset(cls, name: str) -> "QoEWeights":
        key = name.strip().replace(" ", "")
        if key in PRESETS:
            return PRESETS[key]
        raise KeyError(f"unknown QoE objective {name!r}; choose from {sorted(PRESETS)}")


PRESETS = {
    "(1,1,1,1)": QoEWeights(1, 1, 1, 1),
    "(1,2,1,1)": QoEWeights(1, 2, 1, 1),
    "(1,1,2,1)": QoEWeights(1, 1, 2, 1),
    "(1,1,1,2)": QoEWeights(1, 1, 1, 2),
}


@dataclass(frozen=True)
class QoEBreakdown:
    viewport_quality: float
    temporal_variation: float
    spatial_variation: float
    rebuffer_s: float
    total: float

    def terms(self) -> tuple[float, float, float, float]:
        return (self.viewport_quality, self.temporal_variation, self.spatial_variation, self.rebuffer_s)


def _pair(psi, q):
    psi = np.asarray(psi, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if psi.shape != q.shape:
        raise ValueError("probabilities and qualities differ in length")
    return psi, q


def viewport_quality(psi: Sequence[float], q: Sequence[float]) -> float:
    psi, q = _pair(psi, q)
    return float(np.dot(psi, q))


def temporal_variation(psi, q_now, q_prev=None, signed: bool = False) -> float:
    """Probability-weighted change against the previous segment; 0 with no predecessor."""
    if q_prev is None:
        return 0.0
    psi, q_now = _pair(psi, q_now)
    diff = q_now - np.asarray(q_prev, dtype=np.float64)
    return float(np.dot(psi, diff if signed else np.abs(diff)))


def spatial_variation(psi, q, signed: bool = False) -> float:
    """Half the probability-weighted pairwise quality gap over ordered region pairs."""
    psi, q = _pair(psi, q)
    diff = q[:, None] - q[None, :]
    if not signed:
        diff = np.abs(diff)
    return float(0.5 * psi @ diff @ psi)


def rebuffer_time(download_s: float, buffer_s: float, segment_duration_s: float) -> float:
    """max(download - buffer + duration, 0), duration term included as in the model."""
    if buffer_s < 0:
        raise ValueError("buffer must be non-negative")
    return max(download_s - buffer_s + segment_duration_s, 0.0)


def qoe_total(
    weights: QoEWeights,
    psi,
    q,
    q_prev=None,
    rebuffer_s: float = 0.0,
    signed_variation: bool = False,
) -> QoEBreakdown:
    q1 = viewport_quality(psi, q)
    q2 = temporal_variation(psi, q, q_prev, signed=signed_variation)
    q3 = spatial_variation(psi, q, signed=signed_variation)
    q4 = float(rebuffer_s)
    a1, a2, a3, a4 = weights.as_tuple()
    return QoEBreakdown(q1, q2, q3, q4, a1 * q1 - a2 * q2 - a3 * q3 - a4 * q4)
