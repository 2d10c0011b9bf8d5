"""Multi-agent PPO for per-region bitrate selection."""

from .nets import MLP, Adam, net_backward, net_forward
from .ppo import clip_target, critic_loss, discounted_returns, gae, ppo_clip_objective, ppo_clip_terms
from .trainer import (
    MultiAgentPolicy,
    RolloutBuffer,
    TrainConfig,
    TrainingError,
    TrainResult,
    collect_rollout,
    compute_targets,
    greedy_actor,
    random_actor,
    run_episode,
    train,
    update,
)

__all__ = [
    "Adam",
    "MLP",
    "MultiAgentPolicy",
    "RolloutBuffer",
    "TrainConfig",
    "TrainResult",
    "TrainingError",
    "clip_target",
    "collect_rollout",
    "compute_targets",
    "critic_loss",
    "discounted_returns",
    "gae",
    "greedy_actor",
    "net_backward",
    "net_forward",
    "ppo_clip_objective",
    "ppo_clip_terms",
    "random_actor",
    "run_episode",
    "train",
    "update",
]
