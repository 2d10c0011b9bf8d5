"""Video manifest, network traces, viewpoint logs and segment size accounting.

File formats (whitespace separated, ``#`` starts a comment):

* manifest: ``rows cols segments duration_s`` header, one line with the N
  ladder bitrates (Mbps), then ``segments * rows * cols`` lines of N tile
  sizes in megabits, segment-major then tile index.
* trace: ``time_s throughput_mbps`` rows.
* viewpoint log: ``time_s x y z`` rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernels

DEFAULT_LADDER = (1.0, 2.5, 5.0, 8.0, 16.0, 35.0)


class ManifestError(ValueError):
    """Raised when a manifest fails to parse or violates an invariant."""


class TraceError(ValueError):
    """Raised for malformed throughput traces."""


def _data_lines(path: Path) -> list[list[str]]:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append(line.split())
    return rows


@dataclass(frozen=True)
class VideoManifest:
    rows: int
    cols: int
    segments: int
    segment_duration_s: float
    ladder: tuple[float, ...]
    tile_sizes: np.ndarray = field(repr=False)  # [segment, tile, rung], megabits

    def __post_init__(self):
        sizes = np.array(self.tile_sizes, dtype=np.float64)
        sizes.setflags(write=False)
        object.__setattr__(self, "tile_sizes", sizes)
        object.__setattr__(self, "ladder", tuple(float(x) for x in self.ladder))
        self.validate()

    @property
    def n_tiles(self) -> int:
        return self.rows * self.cols

    @property
    def n_rungs(self) -> int:
        return len(self.ladder)

    def validate(self) -> None:
        if self.rows <= 0 or self.cols <= 0:
            raise ManifestError("rows/cols must be positive")
        if self.segments <= 0:
            raise ManifestError("segments must be positive")
        if not self.segment_duration_s > 0:
            raise ManifestError("duration_s must be positive")
        if len(self.ladder) == 0:
            raise ManifestError("ladder is empty")
        if any(b <= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ManifestError("ladder not increasing")
        expected = (self.segments, self.n_tiles, self.n_rungs)
        if self.tile_sizes.shape != expected:
            raise ManifestError(f"tile_sizes has shape {self.tile_sizes.shape}, expected {expected}")
        if not np.all(np.isfinite(self.tile_sizes)) or np.any(self.tile_sizes <= 0):
            raise ManifestError("tile_sizes must be positive")
        if np.any(np.diff(self.tile_sizes, axis=2) < 0):
            raise ManifestError("tile_sizes not monotone in ladder index")


def generate_manifest(
    seed: int = 7,
    rows: int = 6,
    cols: int = 12,
    segments: int = 60,
    duration_s: float = 1.0,
    ladder: Sequence[float] = DEFAULT_LADDER,
    noise: float = 0.2,
) -> VideoManifest:
    """Uniform per-tile split of each rung's bitrate with seeded multiplicative noise.

    Noise is drawn once per (segment, tile) so every tile keeps the rung
    ordering; a running maximum along the ladder guards the invariant anyway.
    """
    rng = np.random.default_rng(seed)
    m = rows * cols
    ladder_arr = np.asarray(ladder, dtype=np.float64)
    factor = rng.uniform(1.0 - noise, 1.0 + noise, size=(segments, m, 1))
    sizes = ladder_arr[None, None, :] * duration_s / m * factor
    sizes = np.maximum.accumulate(sizes, axis=2)
    return VideoManifest(rows, cols, segments, duration_s, tuple(ladder_arr), sizes)


def write_manifest(manifest: VideoManifest, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("# rows cols segments duration_s\n")
        fh.write(f"{manifest.rows} {manifest.cols} {manifest.segments} {float(manifest.segment_duration_s)!r}\n")
        fh.write(" ".join(repr(float(b)) for b in manifest.ladder) + "\n")
        for seg in manifest.tile_sizes:
            for tile in seg:
                fh.write(" ".join(repr(float(x)) for x in tile) + "\n")


def load_manifest(path: str | Path) -> VideoManifest:
    try:
        lines = _data_lines(Path(path))
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    if len(lines) < 2:
        raise ManifestError("manifest needs a header and a ladder line")
    try:
        rows, cols, segments = (int(x) for x in lines[0][:3])
        duration = float(lines[0][3])
        ladder = tuple(float(x) for x in lines[1])
        body = np.array([[float(x) for x in ln] for ln in lines[2:]], dtype=np.float64)
    except (ValueError, IndexError) as exc:
        raise ManifestError(f"parse failure: {exc}") from exc
    n = len(ladder)
    if body.ndim != 2 or body.shape != (segments * rows * cols, n):
        raise ManifestError(
            f"tile_sizes: expected {segments * rows * cols} rows of {n} sizes, got shape {body.shape}"
        )
    return VideoManifest(rows, cols, segments, duration, ladder, body.reshape(segments, rows * cols, n))


def _check_segment(manifest: VideoManifest, t: int) -> None:
    if not 0 <= t < manifest.segments:
        raise IndexError(f"segment {t} out of range [0, {manifest.segments})")


def segment_size(manifest: VideoManifest, t: int, assignment: Sequence[int]) -> float:
    """Total megabits of segment ``t`` with tile m at ladder index ``assignment[m]``."""
    _check_segment(manifest, t)
    rungs = np.asarray(assignment, dtype=np.int64)
    if rungs.shape != (manifest.n_tiles,):
        raise IndexError(f"assignment must have {manifest.n_tiles} entries")
    if rungs.min() < 0 or rungs.max() >= manifest.n_rungs:
        raise IndexError("ladder index out of range")
    return float(manifest.tile_sizes[t, np.arange(manifest.n_tiles), rungs].sum())


def region_size(manifest: VideoManifest, t: int, region: Iterable[int], rung: int) -> float:
    """Megabits of the tiles in ``region`` at a single ladder index."""
    _check_segment(manifest, t)
    tiles = np.fromiter(region, dtype=np.int64)
    if not 0 <= rung < manifest.n_rungs:
        raise IndexError(f"ladder index {rung} out of range")
    if tiles.size == 0:
        return 0.0
    if tiles.min() < 0 or tiles.max() >= manifest.n_tiles:
        raise IndexError("tile index out of range")
    if np.unique(tiles).size != tiles.size:
        raise ValueError("region tiles must be distinct")
    return float(manifest.tile_sizes[t, tiles, rung].sum())


def region_size_table(manifest: VideoManifest, t: int, region: Iterable[int]) -> np.ndarray:
    """Sizes of ``region`` at every rung (the per-agent size vector)."""
    _check_segment(manifest, t)
    tiles = np.fromiter(region, dtype=np.int64)
    if tiles.size == 0:
        return np.zeros(manifest.n_rungs)
    return manifest.tile_sizes[t, tiles, :].sum(axis=0)


@dataclass(frozen=True)
class NetworkTrace:
    """Sample-and-hold throughput trace that loops when exhausted.

    The last sample is held for as long as the preceding interval, so the loop
    period is ``t[-1] + (t[-1] - t[-2])``. A single-sample trace is constant.
    """

    times: np.ndarray
    throughputs: np.ndarray
    offset_mbps: float = 0.0
    name: str = ""

    def __post_init__(self):
        times = np.array(self.times, dtype=np.float64)
        thr = np.array(self.throughputs, dtype=np.float64)
        times.setflags(write=False)
        thr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "throughputs", thr)
        if times.ndim != 1 or times.shape != thr.shape or times.size == 0:
            raise TraceError("trace needs matching, non-empty time and throughput columns")
        if times[0] != 0.0:
            raise TraceError("trace must start at time 0")
        if np.any(np.diff(times) <= 0):
            raise TraceError("timestamps not strictly increasing")
        if np.any(thr + self.offset_mbps <= 0):
            raise TraceError("throughput plus offset must be positive")

    @property
    def period(self) -> float:
        if self.times.size == 1:
            return math.inf
        return float(self.times[-1] + (self.times[-1] - self.times[-2]))

    @property
    def rates(self) -> np.ndarray:
        return self.throughputs + self.offset_mbps

    def throughput_at(self, t: float) -> float:
        if self.times.size > 1:
            t = t % self.period
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.throughputs[max(idx, 0)] + self.offset_mbps)

    def mean(self) -> float:
        if self.times.size == 1:
            return float(self.rates[0])
        widths = np.diff(np.append(self.times, self.period))
        return float(np.dot(widths, self.rates) / self.period)


def load_trace(path: str | Path, offset_mbps: float = 0.0) -> NetworkTrace:
    rows = _data_lines(Path(path))
    try:
        arr = np.array([[float(r[0]), float(r[1])] for r in rows], dtype=np.float64)
    except (ValueError, IndexError) as exc:
        raise TraceError(f"{path}: malformed row ({exc})") from exc
    if arr.size == 0:
        raise TraceError(f"{path}: empty trace")
    return NetworkTrace(arr[:, 0], arr[:, 1], offset_mbps, name=Path(path).stem)


def write_trace(trace: NetworkTrace, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("# time_s throughput_mbps\n")
        for t, v in zip(trace.times, trace.throughputs):
            fh.write(f"{float(t)!r} {float(v)!r}\n")


def generate_trace(seed: int, duration_s: int = 300, low: float = 0.3, high: float = 12.0) -> NetworkTrace:
    """Log-space random walk with occasional regime jumps, 1 s samples (offset not applied)."""
    rng = np.random.default_rng(seed)
    level = np.log(rng.uniform(1.0, 6.0))
    out = np.empty(duration_s)
    for i in range(duration_s):
        if rng.random() < 0.03:
            level = np.log(rng.uniform(low, high))
        level += rng.normal(0.0, 0.12)
        level = float(np.clip(level, np.log(low), np.log(high)))
        out[i] = np.exp(level)
    return NetworkTrace(np.arange(duration_s, dtype=np.float64), np.round(out, 4), name=f"synthetic-{seed}")


def download_time(size_mb: float, trace: NetworkTrace, start_clock_s: float) -> float:
    """Seconds to fetch ``size_mb`` starting at ``start_clock_s`` on ``trace``."""
    if size_mb < 0:
        raise ValueError("size must be non-negative")
    return float(_kernels.download_time(float(size_mb), trace.times, trace.rates, trace.period, float(start_clock_s)))


@dataclass(frozen=True)
class ViewpointLog:
    times: np.ndarray
    vectors: np.ndarray  # (n, 3) unit vectors
    sample_rate_hz: float = 5.0

    def __post_init__(self):
        times = np.array(self.times, dtype=np.float64)
        vec = np.array(self.vectors, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "vectors", vec)
        if times.shape[0] != vec.shape[0]:
            raise ValueError("times and vectors differ in length")
        if np.any(np.diff(times) <= 0):
            raise ValueError("viewpoint timestamps not strictly increasing")
        if np.any(np.abs(np.linalg.norm(vec, axis=1) - 1.0) > 1e-9):
            raise ValueError("viewpoint vectors must be unit norm")

    def window(self, t0: float, t1: float) -> np.ndarray:
        """Vectors with t0 <= time < t1."""
        mask = (self.times >= t0) & (self.times < t1)
        return self.vectors[mask]


def load_viewpoint_log(path: str | Path, sample_rate_hz: float = 5.0) -> ViewpointLog:
    rows = _data_lines(Path(path))
    arr = np.array([[float(x) for x in r[:4]] for r in rows], dtype=np.float64).reshape(-1, 4)
    vec = arr[:, 1:]
    norms = np.linalg.norm(vec, axis=1, keepdims=True)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValueError(f"{path}: viewpoint vectors must be unit norm")
    vec = vec / norms
    return ViewpointLog(arr[:, 0], vec, sample_rate_hz)


def write_viewpoint_log(log: ViewpointLog, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("# time_s x y z\n")
        for t, (x, y, z) in zip(log.times, log.vectors):
            fh.write(f"{float(t)!r} {float(x)!r} {float(y)!r} {float(z)!r}\n")
