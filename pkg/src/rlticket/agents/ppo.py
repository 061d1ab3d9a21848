"""PPO with a clipped surrogate, GAE and separate actor and critic MLPs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..netcore import AdamState, MaskSet, NetworkSpec, ParamSet, adam_step, clip_grad_norm, forward, loss_and_grad
from .common import EvalSchedule, VecEnv, log_softmax, sample_categorical


@dataclass
class PPOConfig:
    lr: float = 5e-4
    gamma: float = 0.99
    gae_lambda: float = 0.8
    clip: float = 0.2
    value_coef: float = 0.5
    entropy_coef: float = 0.001
    epochs: int = 4
    n_workers: int = 4
    horizon: int = 128
    minibatches: int = 1
    max_grad_norm: float = 1.0


def gae(rewards, values, dones, gamma: float, lam: float):
    """Generalized advantage estimates over a time-major rollout.

    ``values`` has one more entry along time than ``rewards`` (the bootstrap
    value of the state after the last step). Works on (T,) or (T, n_envs).
    Returns ``(advantages, returns)``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if values.shape[0] != rewards.shape[0] + 1:
        raise ValueError("values needs exactly one bootstrap entry beyond rewards")
    adv = np.zeros_like(rewards)
    last = np.zeros_like(rewards[0])
    for t in range(rewards.shape[0] - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * nonterminal * values[t + 1] - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
    return adv, adv + values[:-1]


def clipped_surrogate(ratio, adv, clip: float):
    """Per-sample policy loss -min(r A, clip(r, 1-eps, 1+eps) A) and its derivative w.r.t. r."""
    ratio = np.asarray(ratio, dtype=np.float64)
    adv = np.asarray(adv, dtype=np.float64)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    loss = -np.minimum(unclipped, clipped)
    inside = (ratio >= 1.0 - clip) & (ratio <= 1.0 + clip)
    active = (unclipped <= clipped) | inside
    return loss, np.where(active, -adv, 0.0)


def ppo_losses(logits, actions, old_logp, adv, values, returns, cfg: PPOConfig):
    """Loss components and gradients w.r.t. logits and values.

    Returns ``(policy, value, entropy, d_logits, d_values)`` where the
    gradients belong to policy + c_v * value - c_e * entropy.
    """
    n = len(actions)
    logp_all = log_softmax(logits)
    p = np.exp(logp_all)
    logp = logp_all[np.arange(n), actions]
    ratio = np.exp(logp - old_logp)
    pol, d_ratio = clipped_surrogate(ratio, adv, cfg.clip)
    entropy = -(p * logp_all).sum(axis=1)
    onehot = np.zeros_like(logits)
    onehot[np.arange(n), actions] = 1.0
    d_logits = (d_ratio * ratio)[:, None] * (onehot - p) / n
    d_logits += cfg.entropy_coef * p * (logp_all + entropy[:, None]) / n
    err = values - returns
    d_values = 2.0 * cfg.value_coef * err / n
    return float(pol.mean()), float(np.mean(err ** 2)), float(entropy.mean()), d_logits, d_values


class PPOTrainer:
    """Trains ``[actor, critic]`` parameter sets; the critic outputs one value."""

    def __init__(self, actor_spec: NetworkSpec, critic_spec: NetworkSpec, make_env, cfg: PPOConfig):
        self.actor_spec = actor_spec
        self.critic_spec = critic_spec
        self.make_env = make_env
        self.cfg = cfg

    def policy(self, params_list):
        actor = params_list[0]
        act_fn = self.actor_spec.activation
        return lambda obs: forward(actor, None, obs, act_fn).argmax(axis=1)

    def update(self, batch, actor, critic, masks, adam, rng):
        """Run the configured epochs over one rollout batch. Returns mean (policy, value, entropy)."""
        cfg = self.cfg
        obs, actions, old_logp, adv, returns = batch
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        n = len(actions)
        params = ParamSet.concat(actor, critic)
        stats = []
        for _ in range(cfg.epochs):
            order = rng.permutation(n) if cfg.minibatches > 1 else np.arange(n)
            for idx in np.array_split(order, cfg.minibatches):
                o = obs[idx]
                values = forward(critic, None, o, self.critic_spec.activation)[:, 0]
                pol, vloss, ent, d_logits, d_values = ppo_losses(
                    forward(actor, None, o, self.actor_spec.activation), actions[idx], old_logp[idx], adv[idx],
                    values, returns[idx], cfg)
                _, _, g_actor = loss_and_grad(actor, masks[0], o, lambda _: (pol, d_logits),
                                              self.actor_spec.activation)
                _, _, g_critic = loss_and_grad(critic, masks[1], o, lambda _: (vloss, d_values[:, None]),
                                               self.critic_spec.activation)
                grads = ParamSet.concat(g_actor, g_critic)
                if cfg.max_grad_norm:
                    clip_grad_norm(grads, cfg.max_grad_norm)
                adam_step(adam, params, grads, MaskSet.concat(*masks))
                stats.append((pol, vloss, ent))
        return tuple(np.mean(stats, axis=0))

    def train(self, params_list, masks_list, budget: int, seed: int, schedule: EvalSchedule):
        """``params_list`` = [actor, critic] (updated in place); masks may hold None for dense nets."""
        cfg = self.cfg
        actor, critic = params_list
        masks = [m if m is not None else MaskSet.ones_like(p) for m, p in zip(masks_list, params_list)]
        adam = AdamState.fresh(ParamSet.concat(actor, critic), cfg.lr)
        rng = np.random.default_rng(seed)
        venv = VecEnv(self.make_env, cfg.n_workers, seed)
        a_act, c_act = self.actor_spec.activation, self.critic_spec.activation
        steps = 0
        losses = []
        schedule.maybe(0, params_list)
        while steps < budget:
            T = min(cfg.horizon, -(-(budget - steps) // cfg.n_workers))
            obs_buf = np.empty((T, cfg.n_workers, venv.obs.shape[1]))
            act_buf = np.empty((T, cfg.n_workers), dtype=np.int64)
            logp_buf = np.empty((T, cfg.n_workers))
            rew_buf = np.empty((T, cfg.n_workers))
            done_buf = np.empty((T, cfg.n_workers))
            val_buf = np.empty((T + 1, cfg.n_workers))
            for t in range(T):
                obs = venv.obs
                logits = forward(actor, None, obs, a_act)
                actions = sample_categorical(logits, rng)
                obs_buf[t] = obs
                act_buf[t] = actions
                logp_buf[t] = log_softmax(logits)[np.arange(cfg.n_workers), actions]
                val_buf[t] = forward(critic, None, obs, c_act)[:, 0]
                _, rewards, dones, _ = venv.step(actions)
                rew_buf[t] = rewards
                done_buf[t] = dones
                steps += cfg.n_workers
            val_buf[T] = forward(critic, None, venv.obs, c_act)[:, 0]
            adv, ret = gae(rew_buf, val_buf, done_buf, cfg.gamma, cfg.gae_lambda)
            flat = lambda a: a.reshape(T * cfg.n_workers, *a.shape[2:])
            batch = (flat(obs_buf), flat(act_buf), flat(logp_buf), flat(adv), flat(ret))
            losses.append(self.update(batch, actor, critic, masks, adam, rng))
            schedule.maybe(steps, params_list)
        return schedule.result(params_list, losses)

