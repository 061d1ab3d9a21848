"""Episodic discrete-action environments: Cart-Pole, Acrobot and MazeGrid."""

from .acrobot import Acrobot
from .base import Env, StepResult
from .cartpole import CartPole
from .mazegrid import CHANNELS, ENCODINGS, Layout, MazeGrid, load_layout

ENV_IDS = ("cartpole", "acrobot", "mazegrid")


def make(env_id: str, encoding: str | None = None, seed: int = 0) -> Env:
    """Build an environment. ``seed`` only matters for the entangled MazeGrid matrix."""
    if env_id == "cartpole":
        if encoding not in (None, ""):
            raise ValueError("encodings only apply to mazegrid")
        return CartPole()
    if env_id == "acrobot":
        if encoding not in (None, ""):
            raise ValueError("encodings only apply to mazegrid")
        return Acrobot()
    if env_id == "mazegrid":
        return MazeGrid(encoding or "object_map", matrix_seed=seed)
    raise ValueError(f"unknown env_id {env_id!r}")


def reset(env_id: str, encoding: str | None = None, seed: int = 0):
    """Functional entry point: returns ``(env, observation)``."""
    env = make(env_id, encoding, seed)
    return env, env.reset(seed)


def step(env: Env, action) -> StepResult:
    return env.step(action)


def encode(env: Env, mode: str):
    if not isinstance(env, MazeGrid):
        raise ValueError(f"encode() only applies to mazegrid, got {env.env_id}")
    return env.encode(mode)


def obs_names(env_id: str):
    if env_id == "cartpole":
        from .cartpole import OBS_NAMES
        return OBS_NAMES
    if env_id == "acrobot":
        from .acrobot import OBS_NAMES
        return OBS_NAMES
    return None


__all__ = [
    "Acrobot", "CartPole", "MazeGrid", "Env", "StepResult", "Layout", "load_layout",
    "CHANNELS", "ENCODINGS", "ENV_IDS", "make", "reset", "step", "encode", "obs_names",
]
