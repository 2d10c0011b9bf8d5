import numpy as np
import pytest

from tile360 import oracles
from tile360.regions import RegionAssignment, partition, viewport_tiles
from tile360.sphere import PredictionSet, latlon_to_vec

ROWS, COLS = 6, 12


def _enumerate_central(lat_half, lon_half):
    """Tiles whose 30-degree cells overlap [-lat_half, lat_half] x [-lon_half, lon_half]."""
    out = set()
    for r in range(ROWS):
        top, bottom = 90 - 30 * r, 60 - 30 * r
        for c in range(COLS):
            left, right = -180 + 30 * c, -150 + 30 * c
            if min(top, lat_half) > max(bottom, -lat_half) and min(right, lon_half) > max(left, -lon_half):
                out.add(r * COLS + c)
    return frozenset(out)


class TestViewportTiles:
    def test_centre_fov_100_is_16_tiles(self):
        tiles = viewport_tiles(latlon_to_vec(0.0, 0.0), ROWS, COLS, (100, 100))
        assert tiles == _enumerate_central(50, 50)
        assert len(tiles) == 16

    def test_full_sphere(self):
        assert viewport_tiles(latlon_to_vec(20.0, 77.0), ROWS, COLS, (360, 180)) == frozenset(range(72))

    def test_wraparound_matches_rotated_grid(self):
        near = viewport_tiles(latlon_to_vec(0.0, 175.0), ROWS, COLS)
        # rotating the viewpoint by 180 degrees shifts columns by 6
        rotated = viewport_tiles(latlon_to_vec(0.0, -5.0), ROWS, COLS)
        shifted = frozenset((t // COLS) * COLS + (t % COLS + 6) % COLS for t in rotated)
        assert near == shifted
        assert any(t % COLS == 0 for t in near)

    @pytest.mark.parametrize("fov", [(0, 90), (361, 90), (90, 181), (-10, 10)])
    def test_invalid_fov(self, fov):
        with pytest.raises(ValueError):
            viewport_tiles(latlon_to_vec(0.0, 0.0), ROWS, COLS, fov)

    def test_matches_sampling_oracle(self, rng):
        for _ in range(300):
            lat, lon = rng.integers(-320, 321) * 0.25, rng.integers(-720, 721) * 0.25
            fov = (float(rng.integers(20, 361)), float(rng.integers(20, 181)))
            got = viewport_tiles(latlon_to_vec(lat, lon), ROWS, COLS, fov)
            assert got == oracles.footprint_by_sampling(lat, lon, ROWS, COLS, fov), (lat, lon, fov)


class TestPartition:
    def test_non_overlapping_viewpoints(self):
        ps = PredictionSet(latlon_to_vec([0.0, 0.0], [0.0, 180.0]), [0.6, 0.4])
        a = partition(ps, ROWS, COLS)
        fps = [viewport_tiles(p, ROWS, COLS) for p in ps.first_points()]
        assert list(a.regions) == fps
        assert a.rest == frozenset(range(72)) - fps[0] - fps[1]

    def test_identical_viewpoints(self):
        ps = PredictionSet(latlon_to_vec([0.0, 0.0], [30.0, 30.0]), [0.6, 0.4])
        a = partition(ps, ROWS, COLS)
        assert a.regions[0] == viewport_tiles(ps.first_points()[0], ROWS, COLS)
        assert a.regions[1] == frozenset()

    def test_overlap_goes_to_higher_probability(self):
        ps = PredictionSet(latlon_to_vec([0.0, 0.0, 0.0], [-120.0, 0.0, 40.0]), [0.5, 0.3, 0.2])
        a = partition(ps, ROWS, COLS)
        fp2, fp3 = (viewport_tiles(p, ROWS, COLS) for p in ps.first_points()[1:])
        overlap = fp2 & fp3
        assert overlap and overlap <= a.regions[1] and not overlap & a.regions[2]

    def test_randomized_exact_partition(self, rng):
        for _ in range(10_000):
            n = int(rng.integers(1, 5))
            probs = np.sort(rng.dirichlet(np.ones(n)))[::-1]
            ps = PredictionSet(latlon_to_vec(rng.uniform(-85, 85, n), rng.uniform(-180, 180, n)), probs)
            a = partition(ps, ROWS, COLS)
            tiles = [t for r in a.regions for t in r] + list(a.rest)
            assert sorted(tiles) == list(range(72))
            fps = [viewport_tiles(p, ROWS, COLS) for p in ps.first_points()]
            regions, rest = oracles.partition_reference(fps, list(probs), 72)
            assert list(a.regions) == regions and a.rest == rest

    def test_owner_map(self):
        ps = PredictionSet(latlon_to_vec([0.0], [0.0]), [1.0])
        a = partition(ps, ROWS, COLS)
        owner = a.tile_owner(72)
        assert set(np.flatnonzero(owner == 0)) == a.regions[0]
        assert set(np.flatnonzero(owner == -1)) == a.rest

    def test_assignment_invariants(self):
        with pytest.raises(ValueError):
            RegionAssignment((frozenset({1}), frozenset({1})), (0.5, 0.5), frozenset())
        with pytest.raises(ValueError):
            RegionAssignment((frozenset({1}),), (1.0,), frozenset({1}))
