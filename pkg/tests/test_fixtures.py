import numpy as np
import pytest

from tile360.env import load_prediction_fixture
from tile360.fixtures import greedy_optimum, toy_environment, toy_train_config, write_fixture_set
from tile360.media import load_manifest, load_trace, load_viewpoint_log


class TestToyEnvironment:
    def test_greedy_optimum_frozen(self):
        opt, chosen = greedy_optimum(toy_environment())
        assert opt == pytest.approx(33.7706, abs=1e-4)
        assert len(chosen) == 20
        assert chosen[-1] == (5, 5, 5)

    def test_deterministic(self):
        a, b = toy_environment(), toy_environment()
        a.reset()
        b.reset()
        for _ in range(5):
            _, ra, _, _ = a.step((2, 3, 4))
            _, rb, _, _ = b.step((2, 3, 4))
            assert ra == rb

    def test_train_config_valid(self):
        cfg = toy_train_config("ippo", seed=2)
        cfg.validate()
        assert cfg.mode == "ippo" and cfg.episodes == 2000


class TestFixtureSet:
    def test_files_load(self, tmp_path):
        paths = write_fixture_set(tmp_path, seed=5, n_traces=3, segments=4)
        m = load_manifest(paths["manifest"])
        assert m.segments == 4
        traces = sorted(paths["traces"].glob("*.txt"))
        assert len(traces) == 3
        assert np.all(load_trace(traces[0], 0.0).rates > 0)
        assert len(load_prediction_fixture(paths["predictions"]).per_segment) == 4
        load_viewpoint_log(paths["viewpoints"])

    def test_seeded(self, tmp_path):
        write_fixture_set(tmp_path / "a", seed=5, n_traces=2, segments=3)
        write_fixture_set(tmp_path / "b", seed=5, n_traces=2, segments=3)
        for name in ("manifest.txt", "predictions.txt", "viewpoints.txt", "traces/trace_001.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
