import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tile360 import oracles
from tile360.qoe import (
    PRESETS,
    QoEWeights,
    qoe_total,
    rebuffer_time,
    spatial_variation,
    temporal_variation,
    viewport_quality,
)


class TestTerms:
    def test_quality(self):
        assert viewport_quality([0.7, 0.3], [10, 5]) == pytest.approx(8.5, abs=1e-12)
        assert viewport_quality([0.2, 0.5, 0.3], [4, 4, 4]) == pytest.approx(4.0, abs=1e-12)
        assert viewport_quality([1.0], [16.0]) == 16.0

    def test_temporal(self):
        assert temporal_variation([0.7, 0.3], [8, 5], [8, 5]) == 0.0
        assert temporal_variation([0.7, 0.3], [8, 5], [10, 5]) == pytest.approx(1.4, abs=1e-12)
        assert temporal_variation([0.7, 0.3], [8, 5], None) == 0.0

    def test_spatial(self):
        assert spatial_variation([0.7, 0.3], [5, 5]) == 0.0
        assert spatial_variation([0.7, 0.3], [10, 5]) == pytest.approx(1.05, abs=1e-12)
        assert spatial_variation([1.0], [35.0]) == 0.0

    def test_signed_flag_keeps_sign(self):
        assert temporal_variation([0.7, 0.3], [8, 5], [10, 5], signed=True) == pytest.approx(-1.4)
        assert spatial_variation([0.7, 0.3], [10, 5], signed=True) == pytest.approx(0.0, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            viewport_quality([0.5, 0.5], [1.0])


class TestRebuffer:
    def test_hand_cases(self):
        assert rebuffer_time(0.5, 2.0, 1.0) == 0.0
        assert rebuffer_time(3.0, 1.0, 1.0) == pytest.approx(3.0, abs=1e-12)
        assert rebuffer_time(0.0, 0.4, 1.0) == pytest.approx(0.6, abs=1e-12)
        assert rebuffer_time(0.0, 3.0, 1.0) == 0.0

    def test_negative_buffer(self):
        with pytest.raises(ValueError):
            rebuffer_time(1.0, -0.1, 1.0)


class TestTotal:
    def test_worked_example(self):
        b = qoe_total(QoEWeights(1, 1, 1, 1), [0.7, 0.3], [10, 5], [8, 5], 0.0)
        assert b.terms() == pytest.approx((8.5, 1.4, 1.05, 0.0), abs=1e-12)
        assert abs(b.total - 6.05) < 1e-12

    def test_quality_only(self):
        b = qoe_total(QoEWeights(1, 0, 0, 0), [0.6, 0.4], [16, 2.5], [1, 1], 3.0)
        assert b.total == b.viewport_quality

    def test_all_zero(self):
        b = qoe_total(QoEWeights(1, 1, 1, 1), [0.5, 0.5], [0.0, 0.0], [0.0, 0.0], 0.0)
        assert b.terms() == (0.0, 0.0, 0.0, 0.0) and b.total == 0.0

    def test_matches_reference_on_random_inputs(self, rng):
        for _ in range(1000):
            n = int(rng.integers(1, 6))
            psi = rng.dirichlet(np.ones(n))
            q, qp = rng.uniform(0, 40, n), rng.uniform(0, 40, n)
            w, reb = rng.uniform(0, 3, 4), rng.uniform(0, 5)
            got = qoe_total(QoEWeights(*w), psi, q, qp, reb)
            ref = oracles.qoe_reference(w, psi, q, qp, reb)
            assert max(abs(a - b) for a, b in zip((*got.terms(), got.total), ref)) <= 1e-12

    @settings(max_examples=200)
    @given(st.lists(st.floats(0, 50), min_size=1, max_size=5), st.lists(st.floats(0, 50), min_size=5, max_size=5))
    def test_penalties_non_negative(self, q, qp):
        psi = np.full(len(q), 1.0 / len(q))
        b = qoe_total(QoEWeights(), psi, q, qp[: len(q)], 0.0)
        assert b.temporal_variation >= 0 and b.spatial_variation >= 0


class TestPresets:
    def test_presets(self):
        assert QoEWeights.preset("(1,1,1,1)") == QoEWeights(1, 1, 1, 1)
        assert QoEWeights.preset("(1, 2, 1, 1)").temporal == 2
        assert len(PRESETS) == 4

    def test_unknown_preset(self):
        with pytest.raises(KeyError):
            QoEWeights.preset("(2,2,2,2)")

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            QoEWeights(1, -1, 1, 1)
