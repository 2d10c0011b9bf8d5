import math
from dataclasses import replace

import numpy as np
import pytest

from tile360 import oracles
from tile360.fixtures import toy_environment
from tile360.madrl import (
    MLP,
    MultiAgentPolicy,
    TrainConfig,
    TrainingError,
    collect_rollout,
    critic_loss,
    discounted_returns,
    gae,
    ppo_clip_objective,
    ppo_clip_terms,
    random_actor,
    run_episode,
    train,
    update,
)
from tile360.madrl.nets import Adam, net_backward, net_forward
from tile360.madrl.trainer import policy_ratios


class TestNets:
    def test_zero_weight_actor_is_uniform(self):
        net = MLP((5, 8, 6), head="softmax")
        for w in net.weights:
            w[...] = 0
        np.testing.assert_allclose(net(np.ones(5)), 1 / 6)

    def test_critic_output_shape_and_determinism(self):
        net = MLP((5, 8, 1), seed=3)
        x = np.arange(5.0)
        assert net_forward(net, x).output.shape == (1, 1)
        np.testing.assert_array_equal(net(x), net(x))

    def test_actor_simplex(self, rng):
        net = MLP((4, 16, 16, 6), seed=1, head="softmax")
        p = net(rng.normal(size=(50, 4)) * 5)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(p > 0)

    @pytest.mark.parametrize("head,out", [("softmax", 6), ("linear", 1)])
    def test_backward_matches_finite_differences(self, rng, head, out):
        worst = 0.0
        for s in range(10):
            net = MLP((7, 12, 12, out), seed=s, head=head)
            assert net.n_params() <= 2000
            x, w = rng.normal(size=(5, 7)), rng.normal(size=(5, out))

            def f():
                c = net.forward(x)
                return float(np.sum(w * (c.probs if head == "softmax" else c.output)))

            analytic = net_backward(net, net_forward(net, x), w)
            worst = max(worst, oracles.relative_error(analytic, oracles.central_difference(f, net.parameters())))
        assert worst <= 1e-4

    def test_zero_upstream_and_linearity(self, rng):
        net = MLP((3, 8, 4), seed=2, head="softmax")
        x = rng.normal(size=(2, 3))
        cache = net.forward(x)
        assert all(np.all(g == 0) for g in net.backward(cache, np.zeros((2, 4))))
        up = rng.normal(size=(2, 4))
        both = net.backward(cache, up)
        g0 = net.backward(net.forward(x[:1]), up[:1])
        g1 = net.backward(net.forward(x[1:]), up[1:])
        for a, b, c in zip(both, g0, g1):
            np.testing.assert_allclose(a, b + c, atol=1e-12)

    def test_input_width_checked(self):
        with pytest.raises(ValueError):
            MLP((3, 4, 1)).forward(np.zeros(4))

    def test_adam_descends_quadratic(self):
        p = [np.array([3.0, -2.0])]
        opt = Adam(p, lr=0.1)
        for _ in range(500):
            opt.step([2 * p[0]])
        assert np.all(np.abs(p[0]) < 1e-2)


class TestReturnsAndAdvantages:
    def test_returns_hand_cases(self):
        assert discounted_returns([1, 1], 2.0, 0.5)[0] == pytest.approx(2.0)
        assert discounted_returns([3.5], 0.0, 0.7)[0] == 3.5
        assert discounted_returns([1] * 5, 0.0, 1.0)[0] == 5.0

    def test_gae_lambda_zero_is_td_error(self, rng):
        r, v = rng.normal(size=6), rng.normal(size=6)
        boot, g = 0.4, 0.9
        td = r + g * np.append(v[1:], boot) - v
        np.testing.assert_allclose(gae(r, v, boot, g, 0.0), td, atol=1e-15)

    def test_gae_lambda_one_zero_values(self, rng):
        r = rng.normal(size=7)
        np.testing.assert_allclose(gae(r, np.zeros(7), 0.0, 0.95, 1.0), oracles.returns_double_sum(r, 0.0, 0.95), atol=1e-12)

    def test_gae_matches_double_sum(self, rng):
        for _ in range(200):
            T = int(rng.integers(1, 21))
            r, v = rng.normal(size=T), rng.normal(size=T)
            b, g, lam = rng.normal(), rng.uniform(0.5, 1), rng.uniform(0, 1)
            np.testing.assert_allclose(gae(r, v, b, g, lam), oracles.gae_double_sum(r, v, b, g, lam), atol=1e-9)
            np.testing.assert_allclose(discounted_returns(r, b, g), oracles.returns_double_sum(r, b, g), atol=1e-9)

    def test_validation(self):
        with pytest.raises(ValueError):
            discounted_returns([], 0.0, 0.9)
        with pytest.raises(ValueError):
            gae([1.0, 2.0], [1.0], 0.0, 0.9, 0.9)


class TestClipObjective:
    def test_hand_cases(self):
        assert ppo_clip_terms([0.0], [0.0], [0.7], 0.2)[0][0] == pytest.approx(0.7)
        assert ppo_clip_terms([math.log(1.5)], [0.0], [1.0], 0.2)[0][0] == pytest.approx(1.2, abs=1e-15)
        assert ppo_clip_terms([math.log(0.5)], [0.0], [-1.0], 0.2)[0][0] == pytest.approx(-0.8, abs=1e-15)

    def test_bound_holds(self, rng):
        lo, ln, a = rng.normal(size=500), rng.normal(size=500), rng.normal(size=500)
        terms, _, ratio = ppo_clip_terms(ln, lo, a, 0.2)
        g = np.where(a >= 0, 1.2 * a, 0.8 * a)
        assert np.all(terms <= ratio * a + 1e-15) and np.all(terms <= g + 1e-15)
        np.testing.assert_array_equal(terms, np.minimum(ratio * a, g))

    def test_constant_shift_invariance(self, rng):
        lo, ln, a = rng.normal(size=50), rng.normal(size=50), rng.normal(size=50)
        base, _ = ppo_clip_objective(ln, lo, a, 0.2)
        shifted, _ = ppo_clip_objective(ln + 3.7, lo + 3.7, a, 0.2)
        assert shifted == pytest.approx(base, abs=1e-12)

    def test_gradient_matches_finite_differences(self, rng):
        lo, a = rng.normal(size=40), rng.normal(size=40)
        ln = lo + rng.normal(0, 0.3, 40)
        _, grad = ppo_clip_objective(ln, lo, a, 0.2)
        h = 1e-6
        for k in range(40):
            up, dn = ln.copy(), ln.copy()
            up[k] += h
            dn[k] -= h
            num = (ppo_clip_objective(up, lo, a, 0.2)[0] - ppo_clip_objective(dn, lo, a, 0.2)[0]) / (2 * h)
            assert grad[k] == pytest.approx(num, abs=1e-6)

    def test_eps_zero_clipped_branch_has_no_gradient(self, rng):
        lo = rng.normal(size=200)
        ln = lo + rng.normal(0, 0.5, 200)
        a = rng.normal(size=200)
        terms, dterms, ratio = ppo_clip_terms(ln, lo, a, 0.0)
        clipped = ratio * a > a
        assert clipped.any()
        assert np.all(dterms[clipped] == 0)
        np.testing.assert_allclose(terms[clipped], a[clipped])

    def test_critic_loss(self):
        assert critic_loss([1.0, 2.0], [1.0, 2.0])[0] == 0.0
        assert critic_loss([1.5, 2.5, 3.5], [1.0, 2.0, 3.0])[0] == pytest.approx(0.25)
        assert critic_loss([3.0], [1.0])[0] == 4.0


def _small_config(**kw):
    base = dict(episodes=8, episodes_per_update=2, hidden=(16, 16), seed=0, actor_lr=1e-3, critic_lr=1e-3)
    base.update(kw)
    return TrainConfig(**base)


class TestRollout:
    def test_shapes_and_pass_through(self):
        env = toy_environment(segments=6)
        cfg = _small_config()
        pol = MultiAgentPolicy(3, env.obs_dim, 6, cfg)
        env.done = True
        buf = collect_rollout([env], pol, 12, np.random.default_rng(0))
        assert buf.obs.shape == (12, 3, env.obs_dim)
        assert buf.actions.shape == buf.logp.shape == buf.values.shape == (12, 3)
        assert len(buf.episodes) == 2
        assert np.all(np.isfinite(buf.logp))
        # the last 6 steps are the second episode, still held in env.log
        np.testing.assert_array_equal(buf.rewards[6:], [r.breakdown.total for r in env.log])
        assert [tuple(a) for a in buf.actions[6:]] == [r.actions for r in env.log]

    def test_critic_inputs(self):
        env = toy_environment(segments=4)
        obs = env.reset()
        m = MultiAgentPolicy(3, env.obs_dim, 6, _small_config(mode="mappo"))
        i = MultiAgentPolicy(3, env.obs_dim, 6, _small_config(mode="ippo"))
        assert m.critic_input(obs, 1).shape == (3 * env.obs_dim,)
        np.testing.assert_array_equal(m.critic_input(obs, 1), env.global_state())
        np.testing.assert_array_equal(i.critic_input(obs, 1), obs[1])

    def test_agents_share_no_parameters(self):
        pol = MultiAgentPolicy(3, 10, 6, _small_config())
        nets = pol.actors + pol.critics
        for a in range(len(nets)):
            for b in range(a + 1, len(nets)):
                for p in nets[a].parameters():
                    assert not any(np.shares_memory(p, q) for q in nets[b].parameters())


class TestUpdate:
    def _buffer(self, cfg, seed=0):
        env = toy_environment(segments=10)
        pol = MultiAgentPolicy(3, env.obs_dim, 6, cfg)
        env.done = True
        return env, pol, collect_rollout([env], pol, 40, np.random.default_rng(seed))

    def test_ratio_stays_near_one(self):
        cfg = _small_config(clip_eps=0.2, actor_lr=1e-4)
        _, pol, buf = self._buffer(cfg)
        stats = update(buf, pol, cfg, np.random.default_rng(1))
        r = policy_ratios(buf, pol)
        assert 1 - 2 * cfg.clip_eps <= r.mean() <= 1 + 2 * cfg.clip_eps
        assert set(stats) == {"actor_objective", "critic_loss", "entropy", "clip_fraction", "approx_kl"}
        for a in pol.actors:
            np.testing.assert_allclose(a(buf.obs[:, 0]).sum(axis=1), 1.0, atol=1e-6)

    def test_other_agents_actions_do_not_move_agent_zero(self):
        cfg = _small_config()
        params = []
        for flip in (False, True):
            _, pol, buf = self._buffer(cfg)
            if flip:
                buf.actions[:, 1:] = (buf.actions[:, 1:] + 1) % 6
                buf.logp[:, 1:] = np.log(1 / 6)
            update(buf, pol, cfg, np.random.default_rng(0))
            params.append(pol.actors[0].parameters() + pol.critics[0].parameters())
        assert all(np.array_equal(a, b) for a, b in zip(*params))

    def test_same_seed_same_parameters(self):
        cfg = _small_config()
        params = []
        for _ in range(2):
            _, pol, buf = self._buffer(cfg)
            update(buf, pol, cfg, np.random.default_rng(3))
            params.append([p.copy() for a in pol.actors for p in a.parameters()])
        assert all(np.array_equal(a, b) for a, b in zip(*params))

    def test_non_finite_aborts(self):
        cfg = _small_config()
        _, pol, buf = self._buffer(cfg)
        buf.rewards[3] = np.nan
        with pytest.raises(TrainingError):
            update(buf, pol, cfg, np.random.default_rng(0))

    def test_config_validation(self):
        for bad in (dict(gamma=0.0), dict(lam=1.5), dict(clip_eps=-0.1), dict(mode="vdn"), dict(episodes=0)):
            with pytest.raises(ValueError):
                replace(TrainConfig(), **bad).validate()


class TestTrain:
    def test_curve_rows_and_checkpoint(self, tmp_path):
        env = toy_environment(segments=5)
        res = train(env, _small_config(episodes=7, episodes_per_update=3), out_dir=tmp_path)
        lines = (tmp_path / "curve.tsv").read_text().splitlines()
        assert lines[0].split("\t") == ["episode", "mean_qoe", "q1", "q2", "q3", "q4", "freeze_freq"]
        assert len(lines) == 1 + 7 and len(res.curve) == 7
        assert (tmp_path / "best.bin").exists() and (tmp_path / "best.idx").exists()

    def test_checkpoint_round_trip(self, tmp_path):
        env = toy_environment(segments=5)
        cfg = _small_config(episodes=4)
        res = train(env, cfg)
        res.policy.save(tmp_path / "ck")
        other = MultiAgentPolicy(3, env.obs_dim, 6, replace(cfg, seed=9))
        other.load(tmp_path / "ck")
        obs = env.reset()
        for a, b in zip(res.policy.actors, other.actors):
            np.testing.assert_array_equal(a(obs[0]), b(obs[0]))

    def test_training_is_deterministic(self):
        curves = [train(toy_environment(segments=5), _small_config(episodes=6)).curve for _ in range(2)]
        assert curves[0] == curves[1]

    def test_random_policy_reproducible(self):
        env = toy_environment(segments=8)
        a = [r.breakdown.total for r in run_episode(env, random_actor(4))]
        b = [r.breakdown.total for r in run_episode(env, random_actor(4))]
        assert a == b
