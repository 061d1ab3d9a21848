"""Pieces shared by the trainers: action selection, seeding, rollouts, evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..netcore import MaskSet, NetworkSpec, ParamSet, forward


@dataclass
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: bool


def derive_seed(*keys) -> int:
    """Deterministic 32-bit seed from a tuple of integers."""
    return int(np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in keys]).generate_state(1)[0])


def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits):
    z = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def act(spec: NetworkSpec, params: ParamSet, masks: Optional[MaskSet], obs, mode: str = "greedy",
        rng=None, epsilon: float = 0.0):
    """Pick actions for one observation or a batch of them.

    ``greedy`` takes the argmax (lowest index wins ties), ``epsilon_greedy``
    replaces it by a uniform action with probability ``epsilon``, and
    ``sample_categorical`` samples from softmax(logits).
    """
    obs = np.asarray(obs, dtype=np.float64)
    single = obs.ndim == 1
    out = forward(params, masks, np.atleast_2d(obs), spec.activation)
    if mode == "greedy":
        actions = out.argmax(axis=1)
    elif mode == "epsilon_greedy":
        actions = out.argmax(axis=1)
        if epsilon > 0:
            explore = rng.random(len(actions)) < epsilon
            actions = np.where(explore, rng.integers(out.shape[1], size=len(actions)), actions)
    elif mode == "sample_categorical":
        actions = sample_categorical(out, rng)
    else:
        raise ValueError(f"unknown action mode {mode!r}")
    return int(actions[0]) if single else actions


def sample_categorical(logits, rng):
    p = softmax(logits)
    u = rng.random((p.shape[0], 1))
    idx = (p.cumsum(axis=1) < u).sum(axis=1)
    return np.minimum(idx, p.shape[1] - 1)


class VecEnv:
    """A handful of independent environment copies stepped in lock-step.

    Finished episodes restart immediately; slot ``j`` draws its k-th episode
    seed from ``(seed, j, k)`` so runs are reproducible.
    """

    def __init__(self, make_env: Callable, n: int, seed: int):
        self.envs = [make_env() for _ in range(n)]
        self.seed = seed
        self.episode_counts = [0] * n
        self.episode_returns = [0.0] * n
        self.finished_returns = []
        self.obs = np.stack([self._reset(j) for j in range(n)])

    def _reset(self, j):
        k = self.episode_counts[j]
        self.episode_counts[j] += 1
        self.episode_returns[j] = 0.0
        return self.envs[j].reset(derive_seed(self.seed, j, k))

    def step(self, actions):
        """Returns ``(next_obs, rewards, dones, final_obs)``.

        ``next_obs`` already contains reset observations for finished slots;
        ``final_obs`` holds the true successor observations.
        """
        n = len(self.envs)
        rewards = np.zeros(n)
        dones = np.zeros(n, dtype=bool)
        final = np.empty_like(self.obs)
        nxt = np.empty_like(self.obs)
        for j, env in enumerate(self.envs):
            res = env.step(int(actions[j]))
            rewards[j] = res.reward
            dones[j] = res.done
            final[j] = res.observation
            self.episode_returns[j] += res.reward
            if res.done:
                self.finished_returns.append(self.episode_returns[j])
                nxt[j] = self._reset(j)
            else:
                nxt[j] = res.observation
        self.obs = nxt
        return nxt, rewards, dones, final


def evaluate_policy(policy: Callable, make_env: Callable, n_episodes: int, seed: int):
    """Run ``n_episodes`` episodes in parallel with a deterministic policy.

    ``policy`` maps a (batch, obs_dim) array to integer actions. Returns the
    list of per-episode returns.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    envs = [make_env() for _ in range(n_episodes)]
    obs = [env.reset(derive_seed(seed, 7919, i)) for i, env in enumerate(envs)]
    returns = np.zeros(n_episodes)
    live = list(range(n_episodes))
    current = {i: obs[i] for i in live}
    while live:
        batch = np.stack([current[i] for i in live])
        actions = policy(batch)
        still = []
        for i, a in zip(live, actions):
            res = envs[i].step(int(a))
            returns[i] += res.reward
            if not res.done:
                current[i] = res.observation
                still.append(i)
        live = still
    return returns.tolist()


@dataclass
class TrainResult:
    """Outcome of one training run (one IMP iteration)."""

    best_return: float
    best_step: int
    best_params: list
    final_params: list
    curve: list = field(default_factory=list)  # (env_step, mean_eval_return)
    checkpoints: dict = field(default_factory=dict)  # env_step -> list of ParamSet
    losses: list = field(default_factory=list)


class EvalSchedule:
    """Evaluate every ``budget / n_points`` environment steps and keep the best.

    Ties go to the later point: on capped tasks many evaluations share the
    maximum, and the latest of them is the most-trained network.
    """

    def __init__(self, budget: int, n_points: int, evaluate: Callable, checkpoint_steps=()):
        self.points = [int(round(budget * (k + 1) / n_points)) for k in range(n_points)]
        self.evaluate = evaluate
        self.next_idx = 0
        self.best_return = -np.inf
        self.best_step = 0
        self.best_params = None
        self.curve = []
        self.pending_ckpt = sorted(int(s) for s in checkpoint_steps)
        self.checkpoints = {}

    def maybe(self, step: int, params_list):
        while self.pending_ckpt and step >= self.pending_ckpt[0]:
            self.checkpoints[self.pending_ckpt.pop(0)] = [p.copy() for p in params_list]
        while self.next_idx < len(self.points) and step >= self.points[self.next_idx]:
            self.next_idx += 1
            ret = float(self.evaluate(params_list))
            self.curve.append((step, ret))
            if ret >= self.best_return:
                self.best_return = ret
                self.best_step = step
                self.best_params = [p.copy() for p in params_list]

    def result(self, final_params, losses=()):
        return TrainResult(self.best_return, self.best_step, self.best_params, [p.copy() for p in final_params],
                           self.curve, self.checkpoints, list(losses))
