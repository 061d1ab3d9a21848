from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import IllegalStateError


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    step: int


class Env:
    """Minimal episodic environment interface.

    Subclasses implement ``_reset(rng)``, ``_step(action)`` and
    ``observe()``; this base handles seeding, step counting, the episode cap
    and the terminal-state guard.
    """

    env_id = ""
    obs_dim = 0
    n_actions = 0
    max_steps = 0

    def __init__(self):
        self.t = 0
        self.done = True

    def reset(self, seed=None) -> np.ndarray:
        self.t = 0
        self.done = False
        self._reset(np.random.default_rng(seed))
        return self.observe()

    def step(self, action) -> StepResult:
        if self.done:
            raise IllegalStateError(f"{self.env_id}: step() called on a finished episode")
        a = int(action)
        if a != action or not 0 <= a < self.n_actions:
            raise ValueError(f"{self.env_id}: invalid action {action!r}")
        reward, terminal = self._step(a)
        self.t += 1
        self.done = bool(terminal or self.t >= self.max_steps)
        return StepResult(self.observe(), float(reward), self.done, self.t)

    def _reset(self, rng):
        raise NotImplementedError

    def _step(self, action):
        raise NotImplementedError

    def observe(self) -> np.ndarray:
        raise NotImplementedError
