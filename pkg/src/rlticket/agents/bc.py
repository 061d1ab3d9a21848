"""Behavioral cloning: a student policy distilled from a frozen expert's rollouts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..netcore import AdamState, MaskSet, NetworkSpec, ParamSet, adam_step, forward, loss_and_grad
from .common import EvalSchedule, VecEnv, log_softmax, sample_categorical, softmax


@dataclass
class BCConfig:
    lr: float = 1e-3
    n_workers: int = 4
    horizon: int = 128
    epochs: int = 4
    minibatch_size: int = 64


class ExpertPolicy:
    """A pre-trained teacher. Its parameters are read-only."""

    def __init__(self, spec: NetworkSpec, params: ParamSet):
        self.spec = spec
        self.params = params.copy()
        for a in self.params.arrays():
            a.flags.writeable = False

    def logits(self, obs):
        return forward(self.params, None, obs, self.spec.activation)

    def probs(self, obs):
        return softmax(self.logits(obs))


def cross_entropy(expert_logits, student_logits):
    """Mean H(pi_expert, pi_student) over the batch and its gradient w.r.t. the student logits."""
    p = softmax(expert_logits)
    logq = log_softmax(student_logits)
    n = len(p)
    loss = float(-(p * logq).sum(axis=1).mean())
    return loss, (np.exp(logq) - p) / n


def bc_update(expert: ExpertPolicy, student_spec: NetworkSpec, student: ParamSet, masks, adam: AdamState, states):
    """One gradient step of the student on a batch of expert-visited states. Returns the loss."""
    target = expert.logits(states)
    loss, _, grads = loss_and_grad(student, masks, states, lambda out: cross_entropy(target, out),
                                   student_spec.activation)
    adam_step(adam, student, grads, masks)
    return loss


class BCTrainer:
    """Streams fixed-policy expert rollouts and fits the student after each chunk."""

    def __init__(self, expert: ExpertPolicy, student_spec: NetworkSpec, make_env, cfg: BCConfig):
        self.expert = expert
        self.student_spec = student_spec
        self.make_env = make_env
        self.cfg = cfg

    def policy(self, params_list):
        student = params_list[0]
        act_fn = self.student_spec.activation
        return lambda obs: forward(student, None, obs, act_fn).argmax(axis=1)

    def train(self, params_list, masks_list, budget: int, seed: int, schedule: EvalSchedule):
        cfg = self.cfg
        student = params_list[0]
        masks = masks_list[0] if masks_list[0] is not None else MaskSet.ones_like(student)
        adam = AdamState.fresh(student, cfg.lr)
        rng = np.random.default_rng(seed)
        venv = VecEnv(self.make_env, cfg.n_workers, seed)
        steps = 0
        losses = []
        schedule.maybe(0, params_list)
        while steps < budget:
            T = min(cfg.horizon, -(-(budget - steps) // cfg.n_workers))
            chunk = np.empty((T, cfg.n_workers, venv.obs.shape[1]))
            for t in range(T):
                chunk[t] = venv.obs
                venv.step(sample_categorical(self.expert.logits(venv.obs), rng))
                steps += cfg.n_workers
            states = chunk.reshape(-1, chunk.shape[-1])
            n_mb = max(1, len(states) // cfg.minibatch_size)
            for _ in range(cfg.epochs):
                for idx in np.array_split(rng.permutation(len(states)), n_mb):
                    losses.append(bc_update(self.expert, self.student_spec, student, masks, adam, states[idx]))
            schedule.maybe(steps, params_list)
        return schedule.result(params_list, losses)
