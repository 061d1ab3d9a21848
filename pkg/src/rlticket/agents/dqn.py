"""Double DQN with proportional prioritized replay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import IllegalStateError
from ..netcore import AdamState, MaskSet, NetworkSpec, ParamSet, adam_step, clip_grad_norm, forward, loss_and_grad
from .common import EvalSchedule, VecEnv

PRIORITY_FLOOR = 1e-6


@dataclass
class DQNConfig:
    lr: float = 5e-4
    gamma: float = 0.99
    batch_size: int = 256
    buffer_size: int = 100_000
    alpha: float = 0.6
    beta_init: float = 0.4
    beta_final: float = 1.0
    huber_delta: float = 1.0
    max_grad_norm: float = 10.0
    replay_ratio: int = 4
    target_update: int = 1000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.1
    learning_starts: int = 5000
    n_workers: int = 4


class ReplayBuffer:
    """Ring buffer of transitions with proportional priorities."""

    def __init__(self, capacity: int, obs_dim: int, alpha: float = 0.6, obs_dtype=np.float64):
        self.capacity = int(capacity)
        self.alpha = alpha
        self.obs = np.zeros((self.capacity, obs_dim), dtype=obs_dtype)
        self.next_obs = np.zeros((self.capacity, obs_dim), dtype=obs_dtype)
        self.actions = np.zeros(self.capacity, dtype=np.int64)
        self.rewards = np.zeros(self.capacity)
        self.dones = np.zeros(self.capacity)
        self.priorities = np.zeros(self.capacity)
        self.max_priority = 1.0
        self.size = 0
        self.pos = 0

    def __len__(self):
        return self.size

    def add(self, s, a, r, s_next, done):
        i = self.pos
        self.obs[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        self.next_obs[i] = s_next
        self.dones[i] = float(done)
        self.priorities[i] = self.max_priority
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def probabilities(self):
        p = self.priorities[:self.size] ** self.alpha
        return p / p.sum()

    def sample(self, batch_size: int, beta: float, rng):
        """Draw indices with P(i) proportional to p_i^alpha.

        Returns ``(idx, weights)`` with importance weights (N P(i))^-beta
        scaled so the largest in the batch is 1.
        """
        if self.size == 0:
            raise IllegalStateError("cannot sample from an empty replay buffer")
        probs = self.probabilities()
        idx = rng.choice(self.size, size=batch_size, p=probs)
        w = (self.size * probs[idx]) ** (-beta)
        return idx, w / w.max()

    def update_priorities(self, idx, td_errors):
        new = np.abs(td_errors) + PRIORITY_FLOOR
        self.priorities[idx] = new
        self.max_priority = max(self.max_priority, float(new.max()))

    def batch(self, idx):
        return (self.obs[idx].astype(np.float64), self.actions[idx], self.rewards[idx],
                self.next_obs[idx].astype(np.float64), self.dones[idx])


def double_q_target(rewards, dones, q_online_next, q_target_next, gamma: float):
    """r + gamma (1 - done) Q_target(s', argmax_a Q_online(s', a))."""
    q_online_next = np.atleast_2d(q_online_next)
    q_target_next = np.atleast_2d(q_target_next)
    best = q_online_next.argmax(axis=1)
    bootstrap = q_target_next[np.arange(len(best)), best]
    return np.asarray(rewards, dtype=np.float64) + gamma * (1.0 - np.asarray(dones, dtype=np.float64)) * bootstrap


def huber(x, delta: float):
    a = np.abs(x)
    return np.where(a <= delta, 0.5 * x * x, delta * (a - 0.5 * delta))


def dqn_update(buffer: ReplayBuffer, spec: NetworkSpec, online: ParamSet, target: ParamSet, masks, adam: AdamState,
               cfg: DQNConfig, beta: float, rng):
    """Sample a prioritized batch, take one Adam step on the weighted Huber loss.

    Returns ``(loss, new_priorities)``; the buffer's priorities are updated in place.
    """
    if len(buffer) < 1:
        raise IllegalStateError("replay buffer is empty")
    idx, weights = buffer.sample(cfg.batch_size, beta, rng)
    s, a, r, s2, d = buffer.batch(idx)
    q_next_online = forward(online, None, s2, spec.activation)
    q_next_target = forward(target, None, s2, spec.activation)
    y = double_q_target(r, d, q_next_online, q_next_target, cfg.gamma)
    n = len(idx)
    rows = np.arange(n)
    holder = {}

    def loss_fn(q):
        td = q[rows, a] - y
        holder["td"] = td
        d_q = np.zeros_like(q)
        d_q[rows, a] = weights * np.clip(td, -cfg.huber_delta, cfg.huber_delta) / n
        return float(np.mean(weights * huber(td, cfg.huber_delta))), d_q

    loss, _, grads = loss_and_grad(online, masks, s, loss_fn, spec.activation)
    if cfg.max_grad_norm:
        clip_grad_norm(grads, cfg.max_grad_norm)
    adam_step(adam, online, grads, masks)
    buffer.update_priorities(idx, holder["td"])
    return loss, buffer.priorities[idx].copy()


class DQNTrainer:
    def __init__(self, spec: NetworkSpec, make_env, cfg: DQNConfig, obs_dtype=np.float64):
        self.spec = spec
        self.make_env = make_env
        self.cfg = cfg
        self.obs_dtype = obs_dtype

    def policy(self, params_list):
        online = params_list[0]
        act_fn = self.spec.activation
        return lambda obs: forward(online, None, obs, act_fn).argmax(axis=1)

    def epsilon(self, step: int, budget: int) -> float:
        cfg = self.cfg
        horizon = max(1.0, cfg.eps_fraction * budget)
        frac = min(1.0, step / horizon)
        return cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start)

    def train(self, params_list, masks_list, budget: int, seed: int, schedule: EvalSchedule):
        cfg = self.cfg
        online = params_list[0]
        masks = masks_list[0] if masks_list[0] is not None else MaskSet.ones_like(online)
        target = online.copy()
        adam = AdamState.fresh(online, cfg.lr)
        rng = np.random.default_rng(seed)
        venv = VecEnv(self.make_env, cfg.n_workers, seed)
        buffer = ReplayBuffer(min(cfg.buffer_size, budget), venv.obs.shape[1], cfg.alpha, self.obs_dtype)
        steps_per_update = max(1, cfg.batch_size // cfg.replay_ratio)
        learning_starts = min(cfg.learning_starts, budget // 10)
        steps = 0
        next_update = learning_starts
        next_sync = cfg.target_update
        losses = []
        schedule.maybe(0, params_list)
        while steps < budget:
            obs = venv.obs
            q = forward(online, None, obs, self.spec.activation)
            actions = q.argmax(axis=1)
            eps = self.epsilon(steps, budget)
            explore = rng.random(len(actions)) < eps
            actions = np.where(explore, rng.integers(q.shape[1], size=len(actions)), actions)
            _, rewards, dones, final = venv.step(actions)
            for j in range(len(actions)):
                buffer.add(obs[j], actions[j], rewards[j], final[j], dones[j])
            steps += len(actions)
            while steps >= next_update:
                beta = cfg.beta_init + min(1.0, steps / budget) * (cfg.beta_final - cfg.beta_init)
                loss, _ = dqn_update(buffer, self.spec, online, target, masks, adam, cfg, beta, rng)
                losses.append(loss)
                next_update += steps_per_update
            if steps >= next_sync:
                target = online.copy()
                next_sync += cfg.target_update
            schedule.maybe(steps, params_list)
        return schedule.result(params_list, losses)
