"""Return, advantage and PPO-Clip arithmetic."""

from __future__ import annotations

import numpy as np

from .. import _kernels


def discounted_returns(rewards, bootstrap_value: float, gamma: float) -> np.ndarray:
    """G_t = sum_{i>=t} gamma^(i-t) r_i + gamma^(T-t) V(s_T)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.ndim != 1 or rewards.size == 0:
        raise ValueError("rewards must be a non-empty 1-D sequence")
    return _kernels.discounted_returns(rewards, float(bootstrap_value), float(gamma))


def gae(rewards, values, bootstrap_value: float, gamma: float, lam: float) -> np.ndarray:
    """Truncated GAE: A_t = sum_l (gamma*lam)^l delta_{t+l}."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape or rewards.ndim != 1:
        raise ValueError("rewards and values must be aligned 1-D arrays")
    return _kernels.gae(rewards, values, float(bootstrap_value), float(gamma), float(lam))


def clip_target(advantages, eps: float) -> np.ndarray:
    """(1+eps)A where A >= 0, (1-eps)A otherwise."""
    a = np.asarray(advantages, dtype=np.float64)
    return np.where(a >= 0, (1.0 + eps) * a, (1.0 - eps) * a)


def ppo_clip_terms(logp_new, logp_old, advantages, eps: float):
    """Per-sample surrogate min(r A, g(eps, A)) and its derivative w.r.t. logp_new."""
    logp_new = np.asarray(logp_new, dtype=np.float64)
    adv = np.asarray(advantages, dtype=np.float64)
    ratio = np.exp(logp_new - np.asarray(logp_old, dtype=np.float64))
    unclipped = ratio * adv
    clipped = clip_target(adv, eps)
    use_ratio = unclipped <= clipped
    terms = np.where(use_ratio, unclipped, clipped)
    dterms = np.where(use_ratio, unclipped, 0.0)  # d(r A)/d logp = r A
    return terms, dterms, ratio


def ppo_clip_objective(logp_new, logp_old, advantages, eps: float):
    """Mean surrogate J^CLIP and its gradient w.r.t. each sample's new log-prob."""
    terms, dterms, _ = ppo_clip_terms(logp_new, logp_old, advantages, eps)
    n = terms.size
    return float(terms.mean()), dterms / n


def critic_loss(values, returns):
    """Mean squared error and its gradient w.r.t. the values."""
    v = np.asarray(values, dtype=np.float64)
    g = np.asarray(returns, dtype=np.float64)
    diff = v - g
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


def entropy_and_grad(probs: np.ndarray):
    """Mean row entropy and its gradient w.r.t. the logits."""
    logp = np.log(np.clip(probs, 1e-300, None))
    h = -np.sum(probs * logp, axis=1)
    grad = -probs * (logp + h[:, None]) / probs.shape[0]
    return float(h.mean()), grad
