import itertools

import numpy as np
import pytest

from tile360.env import (
    BaselinePredictor,
    EnvConfig,
    EnvError,
    OraclePredictor,
    StreamingEnv,
    episode_log_header,
    freeze_frequency,
    load_prediction_fixture,
    read_episode_log,
    write_episode_log,
    write_prediction_fixture,
)
from tile360.fixtures import constant_trace, toy_predictions
from tile360.media import NetworkTrace, VideoManifest, ViewpointLog, generate_manifest
from tile360.qoe import QoEWeights
from tile360.sphere import CENTER, latlon_to_vec

LADDER = (1.0, 2.5, 5.0, 8.0, 16.0, 35.0)


def uniform_manifest(segments=5, value=0.1):
    sizes = np.tile(np.arange(1, 7, dtype=float) * value, (segments, 72, 1))
    return VideoManifest(6, 12, segments, 1.0, LADDER, sizes)


def make_env(mbps=100.0, segments=5, weights=QoEWeights(1, 1, 1, 1), manifest=None, **kw):
    manifest = manifest or uniform_manifest(segments)
    cfg = EnvConfig(
        manifest=manifest,
        trace=constant_trace(mbps),
        predictor=OraclePredictor(toy_predictions(manifest.segments)),
        weights=weights,
        **kw,
    )
    return StreamingEnv(cfg)


class TestConfig:
    def test_invariants(self):
        with pytest.raises(ValueError):
            make_env(agents=0)
        with pytest.raises(ValueError):
            make_env(history_len=0)
        with pytest.raises(ValueError):
            make_env(max_buffer_s=1.0)

    def test_predictor_count_must_match_agents(self):
        with pytest.raises(ValueError):
            make_env(agents=2)


class TestReset:
    def test_shape_and_determinism(self):
        env = make_env()
        a = env.reset()
        b = env.reset()
        np.testing.assert_array_equal(a, b)
        assert a.shape == (3, 2 * 8 + 2 * 6 + 3)

    def test_initial_state(self):
        env = make_env(segments=7)
        obs = env.reset()
        k, n = 8, 6
        assert env.t == 0 and env.buffer_s == 0.0
        assert np.all(obs[:, : 2 * k] == 0)
        np.testing.assert_allclose(obs[:, 2 * k + n + 1], 1.0)  # c / F with c = F
        np.testing.assert_allclose(obs[:, 2 * k + n + 2], 1.0)  # last rung one-hot at 0
        np.testing.assert_allclose(obs[:, 2 * k + n], env.psi)

    def test_observation_normalization(self):
        env = make_env()
        env.reset()
        env.step([2, 2, 2])
        obs = env.observations()
        k, n = 8, 6
        assert obs[0, k - 1] == pytest.approx(env.download_hist[-1] / 10)
        assert obs[0, 2 * k - 1] == pytest.approx(env.throughput_hist[-1] / 100)
        np.testing.assert_allclose(obs[:, 2 * k : 2 * k + n], env.region_sizes / 10)
        assert obs[0, -1] == pytest.approx(env.buffer_s / 10)
        assert obs[0, 2 * k + n + 2 + 2] == 1.0
        assert np.all(np.isfinite(obs))

    def test_global_state_is_concatenation(self):
        env = make_env()
        obs = env.reset()
        np.testing.assert_array_equal(env.global_state(), obs.reshape(-1))


class TestStep:
    def test_lowest_rungs_hand_simulation(self):
        # 72 tiles x 0.1 Mb at 100 Mbps -> 0.072 s per segment; buffer starts empty
        env = make_env(mbps=100.0, segments=40)
        env.reset()
        d = 0.072
        expected = [(d + 1.0, 1.0), (d, 2.0 - d), (0.0, 3.0 - 2 * d)]
        for rebuf, buf in expected:
            env.step([0, 0, 0])
            rec = env.log[-1]
            assert rec.download_s == pytest.approx(d, abs=1e-12)
            assert rec.rebuffer_s == pytest.approx(rebuf, abs=1e-12)
            assert env.buffer_s == pytest.approx(buf, abs=1e-12)
        while not env.done:
            env.step([0, 0, 0])
        assert all(r.rebuffer_s == 0 for r in env.log[2:])
        assert max(r.buffer_s for r in env.log) <= env.config.max_buffer_s

    def test_buffer_ramps_to_cap(self):
        env = make_env(mbps=100.0, segments=80, max_buffer_s=10.0)
        env.reset()
        while not env.done:
            env.step([0, 0, 0])
        assert env.buffer_s == pytest.approx(10.0)
        capped = [r for r in env.log if r.wait_s > 0]
        assert capped and all(r.buffer_s == pytest.approx(10.0) for r in capped)

    def test_rung_zero_quality(self):
        env = make_env()
        env.reset()
        _, _, b, _ = env.step([0, 0, 0])
        assert b.viewport_quality == pytest.approx(LADDER[0] * sum(env.log[0].psi))

    def test_starvation(self):
        env = make_env(mbps=0.001)
        env.reset()
        env.step([0, 0, 0])
        assert env.log[0].rebuffer_s > 0 and env.freezes == 1

    def test_clock_accounting(self):
        env = make_env(mbps=50.0, segments=30, max_buffer_s=5.0)
        env.reset()
        prev = env.clock_s
        while not env.done:
            env.step([5, 3, 1])
            r = env.log[-1]
            assert env.clock_s - prev == pytest.approx(r.download_s + r.wait_s, abs=1e-12)
            assert 0 <= env.buffer_s <= 5.0
            prev = env.clock_s

    def test_rest_tiles_at_lowest_rung(self):
        env = make_env()
        env.reset()
        rungs = env.tile_rungs([5, 4, 3])
        assert np.all(rungs[list(env.assignment.rest)] == 0)
        for i, reg in enumerate(env.assignment.regions):
            assert np.all(rungs[list(reg)] == [5, 4, 3][i])

    def test_errors(self):
        env = make_env(segments=1)
        env.reset()
        with pytest.raises(EnvError):
            env.step([0, 0, 6])
        with pytest.raises(EnvError):
            env.step([0, 0])
        env.step([0, 0, 0])
        with pytest.raises(EnvError):
            env.step([0, 0, 0])

    def test_quality_only_unlimited_bandwidth_prefers_top(self):
        env = make_env(mbps=1e9, weights=QoEWeights(1, 0, 0, 0))
        env.reset()
        best = max(itertools.product(range(6), repeat=3), key=lambda a: env.clone().step(a)[1])
        assert best == (5, 5, 5)

    def test_local_rewards_sum_to_team_reward(self):
        env = make_env(mbps=20.0, segments=10)
        env.reset()
        g = np.random.default_rng(0)
        while not env.done:
            _, r, _, _ = env.step(g.integers(6, size=3))
            assert sum(env.log[-1].local_rewards) == pytest.approx(r, abs=1e-9)

    def test_determinism(self):
        acts = np.random.default_rng(1).integers(6, size=(20, 3))
        logs = []
        for _ in range(2):
            env = make_env(manifest=generate_manifest(seed=2, segments=20), mbps=8.0)
            env.reset()
            for a in acts:
                env.step(a)
            logs.append([(r.breakdown, r.buffer_s, r.clock_s) for r in env.log])
        assert logs[0] == logs[1]

    def test_clone_is_independent(self):
        env = make_env()
        env.reset()
        c = env.clone()
        c.step([5, 5, 5])
        assert env.t == 0 and len(env.log) == 0 and np.all(env.download_hist == 0)


class TestFreezeFrequency:
    def _log(self, stalls, n):
        env = make_env(segments=n)
        env.reset()
        while not env.done:
            env.step([0, 0, 0])
        return [r.__class__(**{**r.__dict__, "rebuffer_s": 1.0 if i in stalls else 0.0}) for i, r in enumerate(env.log)]

    def test_counts(self):
        assert freeze_frequency(self._log(set(), 20)) == 0.0
        assert freeze_frequency(self._log(set(range(20)), 20)) == 1.0
        assert freeze_frequency(self._log({1, 7, 12}, 20)) == pytest.approx(0.15)


class TestFiles:
    def test_episode_log_round_trip(self, tmp_path):
        env = make_env(mbps=10.0)
        env.reset()
        while not env.done:
            env.step([3, 2, 1])
        write_episode_log(env.log, tmp_path / "ep.tsv")
        d = read_episode_log(tmp_path / "ep.tsv")
        assert list(d) == episode_log_header(3)
        np.testing.assert_allclose(d["total"], [r.breakdown.total for r in env.log], atol=1e-6)

    def test_prediction_fixture_round_trip(self, tmp_path):
        sets = toy_predictions(4)
        write_prediction_fixture(sets, tmp_path / "p.txt")
        back = load_prediction_fixture(tmp_path / "p.txt")
        assert back.count == 3
        np.testing.assert_allclose(back.predict(2).first_points(), sets[2].first_points())
        np.testing.assert_allclose(back.predict(2).probabilities, sets[2].probabilities)


class TestPredictors:
    def test_baseline_starts_at_centre(self):
        log = ViewpointLog(np.arange(10) * 0.2 + 0.1, np.tile(latlon_to_vec(0.0, 90.0), (10, 1)))
        p = BaselinePredictor(log, count=2)
        np.testing.assert_allclose(p.predict(0).first_points(), np.tile(CENTER, (2, 1)))
        np.testing.assert_allclose(p.predict(1).first_points()[0], latlon_to_vec(0.0, 90.0), atol=1e-12)
