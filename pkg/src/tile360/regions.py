"""Viewport footprints on the equirectangular tile grid and region partitioning.

Tile ``r * cols + c`` covers latitudes ``[90 - (r+1)*180/rows, 90 - r*180/rows]``
and longitudes ``[-180 + c*360/cols, -180 + (c+1)*360/cols]``. A viewport is
the lat/lon rectangle of size ``fov`` centred on the viewpoint; a tile belongs
to it when the two rectangles overlap with positive area.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .sphere import PredictionSet, vec_to_latlon

DEFAULT_FOV = (100.0, 100.0)


@dataclass(frozen=True)
class RegionAssignment:
    regions: tuple[frozenset[int], ...]
    probabilities: tuple[float, ...]
    rest: frozenset[int]
    segment: int = 0

    def __post_init__(self):
        if len(self.regions) != len(self.probabilities):
            raise ValueError("one probability per region required")
        if any(b > a for a, b in zip(self.probabilities, self.probabilities[1:])):
            raise ValueError("probabilities must be sorted descending")
        seen: set[int] = set()
        for reg in self.regions:
            if seen & reg:
                raise ValueError("regions overlap")
            seen |= reg
        if seen & self.rest:
            raise ValueError("rest region overlaps a viewport region")

    def tile_owner(self, n_tiles: int) -> np.ndarray:
        """Region index per tile, -1 for the rest region."""
        owner = np.full(n_tiles, -1, dtype=np.int64)
        for i, reg in enumerate(self.regions):
            owner[list(reg)] = i
        if set(np.flatnonzero(owner == -1)) != set(self.rest):
            raise ValueError("regions and rest do not partition the tile set")
        return owner


def _overlap(a0, a1, b0, b1) -> bool:
    return min(a1, b1) - max(a0, b0) > 1e-12


def viewport_tiles(viewpoint, rows: int, cols: int, fov: Sequence[float] = DEFAULT_FOV) -> frozenset[int]:
    h_fov, v_fov = float(fov[0]), float(fov[1])
    if not (0 < h_fov <= 360 and 0 < v_fov <= 180):
        raise ValueError(f"invalid FOV {fov}: need 0 < horizontal <= 360 and 0 < vertical <= 180")
    v = np.asarray(viewpoint, dtype=np.float64)
    if abs(np.linalg.norm(v) - 1.0) > 1e-6:
        raise ValueError("viewpoint must be unit norm")
    lat, lon = (float(x) for x in vec_to_latlon(v))
    lat0, lat1 = max(lat - v_fov / 2, -90.0), min(lat + v_fov / 2, 90.0)
    tile_h = 180.0 / rows
    tile_w = 360.0 / cols
    rows_hit = [r for r in range(rows) if _overlap(lat0, lat1, 90 - (r + 1) * tile_h, 90 - r * tile_h)]
    if h_fov >= 360:
        cols_hit = list(range(cols))
    else:
        lon0, lon1 = lon - h_fov / 2, lon + h_fov / 2
        cols_hit = []
        for c in range(cols):
            c0 = -180 + c * tile_w
            if any(_overlap(lon0, lon1, c0 + shift, c0 + tile_w + shift) for shift in (-360.0, 0.0, 360.0)):
                cols_hit.append(c)
    return frozenset(r * cols + c for r in rows_hit for c in cols_hit)


def partition(
    predictions: PredictionSet, rows: int, cols: int, fov: Sequence[float] = DEFAULT_FOV, segment: int = 0
) -> RegionAssignment:
    """Claim footprints in descending probability order; leftovers form the rest region.

    Overlapping tiles go to the earlier (higher-probability) region; equal
    probabilities keep input order.
    """
    claimed: set[int] = set()
    regions = []
    for point in predictions.first_points():
        tiles = viewport_tiles(point, rows, cols, fov) - claimed
        regions.append(frozenset(tiles))
        claimed |= tiles
    rest = frozenset(range(rows * cols)) - claimed
    probs = tuple(float(p) for p in predictions.probabilities)
    return RegionAssignment(tuple(regions), probs, rest, segment)
