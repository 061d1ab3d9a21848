"""Trainers sharing the netcore engine: double DQN, PPO and behavioral cloning."""

from .bc import BCConfig, BCTrainer, ExpertPolicy, bc_update, cross_entropy
from .common import EvalSchedule, TrainResult, Transition, VecEnv, act, derive_seed, evaluate_policy
from .dqn import DQNConfig, DQNTrainer, ReplayBuffer, double_q_target, dqn_update, huber
from .ppo import PPOConfig, PPOTrainer, clipped_surrogate, gae, ppo_losses

__all__ = [
    "BCConfig", "BCTrainer", "ExpertPolicy", "bc_update", "cross_entropy",
    "EvalSchedule", "TrainResult", "Transition", "VecEnv", "act", "derive_seed", "evaluate_policy",
    "DQNConfig", "DQNTrainer", "ReplayBuffer", "double_q_target", "dqn_update", "huber",
    "PPOConfig", "PPOTrainer", "clipped_surrogate", "gae", "ppo_losses",
]
