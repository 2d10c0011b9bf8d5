"""MAPPO (centralised critics) and IPPO (local critics) training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..env import StreamingEnv, freeze_frequency
from ..media import NetworkTrace
from ..tensorio import load_tensors, save_tensors
from .nets import MLP, Adam
from .ppo import critic_loss, discounted_returns, entropy_and_grad, gae, ppo_clip_terms

log = logging.getLogger(__name__)


class TrainingError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    """Optimisation settings.

    Minibatch size, epochs per update and the absence of parameter sharing
    are choices made here, not values taken from published results.
    """

    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    actor_lr: float = 1e-4
    critic_lr: float = 1e-4
    epochs: int = 4
    minibatch: int = 64
    episodes: int = 2000
    episodes_per_update: int = 4
    entropy_coef: float = 0.01
    hidden: tuple[int, ...] = (64, 64)
    mode: str = "mappo"
    seed: int = 0
    normalize_advantages: bool = True
    reward_scale: float = 1.0

    def validate(self) -> None:
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 <= self.lam <= 1:
            raise ValueError("lambda must lie in [0, 1]")
        if not self.clip_eps >= 0:
            raise ValueError("clip epsilon must be non-negative")
        if self.mode not in ("mappo", "ippo"):
            raise ValueError(f"mode must be mappo or ippo, got {self.mode!r}")
        if self.episodes < 1 or self.episodes_per_update < 1 or self.epochs < 1 or self.minibatch < 1:
            raise ValueError("episode, epoch and minibatch counts must be positive")


class MultiAgentPolicy:
    """One actor and one critic per agent; no parameters are shared."""

    def __init__(self, n_agents: int, obs_dim: int, n_actions: int, config: TrainConfig):
        self.n_agents = n_agents
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.mode = config.mode
        critic_in = obs_dim * n_agents if config.mode == "mappo" else obs_dim
        self.actors = [
            MLP((obs_dim, *config.hidden, n_actions), seed=config.seed * 1000 + 2 * i, head="softmax", out_scale=0.01)
            for i in range(n_agents)
        ]
        self.critics = [
            MLP((critic_in, *config.hidden, 1), seed=config.seed * 1000 + 2 * i + 1, head="linear")
            for i in range(n_agents)
        ]
        self.actor_opts = [Adam(a.parameters(), lr=config.actor_lr) for a in self.actors]
        self.critic_opts = [Adam(c.parameters(), lr=config.critic_lr) for c in self.critics]

    def critic_input(self, obs: np.ndarray, agent: int) -> np.ndarray:
        """obs is (..., I, obs_dim); MAPPO critics see the concatenated global state."""
        if self.mode == "mappo":
            return obs.reshape(*obs.shape[:-2], self.n_agents * self.obs_dim)
        return obs[..., agent, :]

    def greedy(self, obs: np.ndarray) -> np.ndarray:
        return np.array([int(np.argmax(self.actors[i](obs[i])[0])) for i in range(self.n_agents)])

    def save(self, path: str | Path, meta: dict | None = None) -> None:
        tensors = {}
        for i, (a, c) in enumerate(zip(self.actors, self.critics)):
            tensors.update({f"actor{i}.{k}": v for k, v in a.named_parameters().items()})
            tensors.update({f"critic{i}.{k}": v for k, v in c.named_parameters().items()})
        save_tensors(path, tensors, {"mode": self.mode, **(meta or {})})

    def load(self, path: str | Path) -> None:
        tensors, _ = load_tensors(path)
        for i, (a, c) in enumerate(zip(self.actors, self.critics)):
            a.load_named({k.split(".", 1)[1]: v for k, v in tensors.items() if k.startswith(f"actor{i}.")})
            c.load_named({k.split(".", 1)[1]: v for k, v in tensors.items() if k.startswith(f"critic{i}.")})


@dataclass
class RolloutBuffer:
    obs: np.ndarray  # (T, I, obs_dim)
    actions: np.ndarray  # (T, I)
    logp: np.ndarray  # (T, I), behaviour policy
    rewards: np.ndarray  # (T,)
    values: np.ndarray  # (T, I), per-agent critic
    dones: np.ndarray  # (T,) episode ended after this step
    bootstrap: np.ndarray  # (T, I) V(s_{t+1}) used where a segment is truncated, else 0
    episodes: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return self.rewards.shape[0]

    def segments(self):
        """(start, stop) index pairs of contiguous trajectory pieces."""
        start = 0
        n = len(self)
        for t in range(n):
            if self.dones[t] or t == n - 1:
                yield start, t + 1
                start = t + 1


def episode_summary(env: StreamingEnv) -> dict:
    terms = np.array([r.breakdown.terms() for r in env.log])
    totals = np.array([r.breakdown.total for r in env.log])
    return {
        "mean_qoe": float(totals.mean()),
        "q1": float(terms[:, 0].mean()),
        "q2": float(terms[:, 1].mean()),
        "q3": float(terms[:, 2].mean()),
        "q4": float(terms[:, 3].mean()),
        "freeze_freq": freeze_frequency(env.log, env.manifest.segments),
    }


def collect_rollout(
    envs: Sequence[StreamingEnv],
    policy: MultiAgentPolicy,
    horizon: int,
    rng: np.random.Generator,
    trace_sampler: Callable[[], NetworkTrace | None] | None = None,
) -> RolloutBuffer:
    """Run ``horizon`` steps in each environment with sampled actions.

    Environments that are not mid-episode are reset first. Episode summaries
    of the episodes finished during collection are attached to the buffer.
    """
    n_agents = policy.n_agents
    obs_l, act_l, logp_l, rew_l, val_l, done_l, boot_l = [], [], [], [], [], [], []
    episodes = []
    for env in envs:
        if env.done:
            env.reset(trace=trace_sampler() if trace_sampler else None)
        obs = env.observations()
        for step in range(horizon):
            actions = np.empty(n_agents, dtype=np.int64)
            logps = np.empty(n_agents)
            values = np.empty(n_agents)
            for i in range(n_agents):
                probs = policy.actors[i](obs[i])[0]
                a = int(rng.choice(policy.n_actions, p=probs))
                actions[i] = a
                logps[i] = math.log(probs[a])
                values[i] = policy.critics[i](policy.critic_input(obs, i))[0]
            next_obs, reward, _, done = env.step(actions)
            boot = np.zeros(n_agents)
            last = step == horizon - 1
            if last and not done:
                boot = np.array([policy.critics[i](policy.critic_input(next_obs, i))[0] for i in range(n_agents)])
            obs_l.append(obs)
            act_l.append(actions)
            logp_l.append(logps)
            rew_l.append(reward)
            val_l.append(values)
            done_l.append(done or last)
            boot_l.append(boot)
            if done:
                episodes.append(episode_summary(env))
                if not last:
                    env.reset(trace=trace_sampler() if trace_sampler else None)
                    next_obs = env.observations()
            obs = next_obs
    return RolloutBuffer(
        obs=np.array(obs_l),
        actions=np.array(act_l),
        logp=np.array(logp_l),
        rewards=np.array(rew_l, dtype=np.float64),
        values=np.array(val_l),
        dones=np.array(done_l),
        bootstrap=np.array(boot_l),
        episodes=episodes,
    )


def compute_targets(buf: RolloutBuffer, config: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-agent advantages and returns, (T, I) each."""
    n, n_agents = buf.values.shape
    adv = np.zeros((n, n_agents))
    ret = np.zeros((n, n_agents))
    rewards = buf.rewards * config.reward_scale
    for start, stop in buf.segments():
        for i in range(n_agents):
            boot = buf.bootstrap[stop - 1, i]
            adv[start:stop, i] = gae(rewards[start:stop], buf.values[start:stop, i], boot, config.gamma, config.lam)
            ret[start:stop, i] = discounted_returns(rewards[start:stop], boot, config.gamma)
    return adv, ret


def update(buf: RolloutBuffer, policy: MultiAgentPolicy, config: TrainConfig, rng: np.random.Generator) -> dict:
    """Minibatch Adam ascent on J^CLIP and descent on the critic MSE, per agent."""
    if len(buf) == 0:
        raise ValueError("empty rollout buffer")
    adv_all, ret_all = compute_targets(buf, config)
    n = len(buf)
    stats = {"actor_objective": 0.0, "critic_loss": 0.0, "entropy": 0.0, "clip_fraction": 0.0, "approx_kl": 0.0}
    n_batches = 0
    for i in range(policy.n_agents):
        actor, critic = policy.actors[i], policy.critics[i]
        obs_i = buf.obs[:, i, :]
        crit_in = policy.critic_input(buf.obs, i)
        adv = adv_all[:, i]
        if config.normalize_advantages and n > 1:
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        for _ in range(config.epochs):
            order = rng.permutation(n)
            for s in range(0, n, config.minibatch):
                mb = order[s : s + config.minibatch]
                cache = actor.forward(obs_i[mb])
                probs = cache.probs
                acts = buf.actions[mb, i]
                logp_new = np.log(np.clip(probs[np.arange(mb.size), acts], 1e-300, None))
                terms, dterms, ratio = ppo_clip_terms(logp_new, buf.logp[mb, i], adv[mb], config.clip_eps)
                ent, dent = entropy_and_grad(probs)
                objective = float(terms.mean()) + config.entropy_coef * ent
                # d(mean term)/d logits through log softmax
                onehot = np.zeros_like(probs)
                onehot[np.arange(mb.size), acts] = 1.0
                dlogits = (dterms / mb.size)[:, None] * (onehot - probs) + config.entropy_coef * dent
                grads = actor.backward_output(cache, -dlogits)  # ascent == descent on the negative

                ccache = critic.forward(crit_in[mb])
                closs, dv = critic_loss(ccache.output[:, 0], ret_all[mb, i])
                cgrads = critic.backward_output(ccache, dv[:, None])

                if not (math.isfinite(objective) and math.isfinite(closs)) or not all(
                    np.all(np.isfinite(g)) for g in (*grads, *cgrads)
                ):
                    raise TrainingError(
                        f"non-finite update for agent {i}: objective={objective}, critic_loss={closs}, "
                        f"max|adv|={np.max(np.abs(adv[mb]))}, max ratio={np.max(ratio)}"
                    )
                policy.actor_opts[i].step(grads)
                policy.critic_opts[i].step(cgrads)
                stats["actor_objective"] += float(terms.mean())
                stats["critic_loss"] += closs
                stats["entropy"] += ent
                stats["clip_fraction"] += float(np.mean(np.abs(ratio - 1.0) > config.clip_eps))
                stats["approx_kl"] += float(np.mean(buf.logp[mb, i] - logp_new))
                n_batches += 1
    return {k: v / n_batches for k, v in stats.items()}


def policy_ratios(buf: RolloutBuffer, policy: MultiAgentPolicy) -> np.ndarray:
    """pi_new(a|o) / pi_old(a|o) for every stored (step, agent)."""
    out = np.empty_like(buf.logp)
    for i in range(policy.n_agents):
        probs = policy.actors[i](buf.obs[:, i, :])
        out[:, i] = probs[np.arange(len(buf)), buf.actions[:, i]] / np.exp(buf.logp[:, i])
    return out


CURVE_HEADER = "episode\tmean_qoe\tq1\tq2\tq3\tq4\tfreeze_freq"


def curve_row(episode: int, s: dict) -> str:
    return f"{episode}\t" + "\t".join(f"{s[k]:.6f}" for k in ("mean_qoe", "q1", "q2", "q3", "q4", "freeze_freq"))


@dataclass
class TrainResult:
    policy: MultiAgentPolicy
    curve: list[dict]
    best_mean_qoe: float


def train(
    env: StreamingEnv,
    config: TrainConfig,
    traces: Sequence[NetworkTrace] | None = None,
    out_dir: str | Path | None = None,
    callback: Callable[[int, dict], None] | None = None,
) -> TrainResult:
    """Alternate rollout collection and updates until ``config.episodes`` episodes ran.

    With ``out_dir`` the learning curve goes to ``curve.tsv`` and the policy
    with the best update-batch mean QoE to ``best`` (tensor container).
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    policy = MultiAgentPolicy(env.n_agents, env.obs_dim, env.n_actions, config)
    trace_rng = np.random.default_rng(config.seed + 1)

    def sampler():
        if not traces:
            return None
        return traces[int(trace_rng.integers(len(traces)))]

    curve: list[dict] = []
    best = -math.inf
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        curve_fh = open(out / "curve.tsv", "w")
        curve_fh.write(CURVE_HEADER + "\n")
    env.done = True
    try:
        while len(curve) < config.episodes:
            remaining = config.episodes - len(curve)
            h = env.manifest.segments * min(config.episodes_per_update, remaining)
            buf = collect_rollout([env], policy, h, rng, sampler)
            stats = update(buf, policy, config, rng)
            batch = buf.episodes[:remaining]
            for s in batch:
                curve.append(s)
                if out:
                    curve_fh.write(curve_row(len(curve), s) + "\n")
            batch_mean = float(np.mean([s["mean_qoe"] for s in batch]))
            if batch_mean > best:
                best = batch_mean
                if out:
                    policy.save(out / "best", {"episode": str(len(curve)), "mean_qoe": f"{best:.6f}"})
            if callback:
                callback(len(curve), {**stats, "batch_mean_qoe": batch_mean})
    finally:
        if out:
            curve_fh.close()
    return TrainResult(policy, curve, best)


def run_episode(env: StreamingEnv, act: Callable[[StreamingEnv, np.ndarray], tuple], trace: NetworkTrace | None = None):
    """Play one full episode with ``act(env, obs) -> (joint_action, rest_rung)``."""
    obs = env.reset(trace=trace)
    done = False
    while not done:
        actions, rest = act(env, obs)
        obs, _, _, done = env.step(actions, rest_rung=rest)
    return env.log


def greedy_actor(policy: MultiAgentPolicy):
    def act(env, obs):
        return policy.greedy(obs), 0

    return act


def random_actor(seed: int):
    rng = np.random.default_rng(seed)

    def act(env, obs):
        return rng.integers(env.n_actions, size=env.n_agents), 0

    return act
