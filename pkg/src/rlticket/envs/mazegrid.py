"""MazeGrid: coin collection on a fixed 10x20 grid with two horizontal patrollers.

The layout is read from a versioned text file (``layouts/mazegrid_v1.txt``).
Three observation encodings are offered:

* ``object_map`` - six one-hot maps (empty, agent, enemy1, enemy2, coin,
  poison) of 10x20 cells, flattened to 1200 binaries. Walls have no map.
* ``rgb`` - three colour planes of 10x20 integers in [0, 255] (600 values).
* ``entangled`` - the object map multiplied by a fixed pseudo-random
  1200x1200 matrix with U(-1, 1) entries, one matrix per seed.
"""

from __future__ import annotations

import functools
import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .base import Env

ENCODINGS = ("object_map", "rgb", "entangled")
CHANNELS = ("empty", "agent", "enemy1", "enemy2", "coin", "poison")
ACTIONS = ((-1, 0), (1, 0), (0, -1), (0, 1))  # up, down, left, right
DEFAULT_LAYOUT = "mazegrid_v1.txt"


@dataclass(frozen=True)
class Layout:
    walls: np.ndarray
    coins: np.ndarray
    poisons: np.ndarray
    agent_start: tuple
    enemy_starts: tuple
    patrols: tuple  # (row, first_col, last_col) per enemy
    colors: dict
    entangle_seed: int
    version: int
    sha256: str

    @property
    def shape(self):
        return self.walls.shape


@functools.lru_cache(maxsize=None)
def _default_layout_bytes() -> bytes:
    return resources.files("rlticket.envs").joinpath("layouts", DEFAULT_LAYOUT).read_bytes()


def load_layout(path=None) -> Layout:
    raw = _default_layout_bytes() if path is None else Path(path).read_bytes()
    text = raw.decode("utf-8")
    header, _, body = text.partition("\n---\n")
    meta = {}
    for line in header.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        meta[key.strip()] = value.strip()
    rows = [r for r in body.splitlines() if r.strip()]
    if len({len(r) for r in rows}) != 1:
        raise ValueError("layout rows have unequal length")
    grid = np.array([list(r) for r in rows])
    starts = {}
    for code in "A12":
        pos = np.argwhere(grid == code)
        if len(pos) != 1:
            raise ValueError(f"layout needs exactly one {code!r} cell")
        starts[code] = tuple(int(v) for v in pos[0])
    patrols = tuple(tuple(int(v) for v in meta[f"patrol.{k}"].split(",")) for k in (1, 2))
    for (r, c), (pr, lo, hi) in zip((starts["1"], starts["2"]), patrols):
        if r != pr or not lo <= c <= hi:
            raise ValueError("enemy start lies outside its patrol segment")
    colors = {k[len("color."):]: tuple(int(v) for v in val.split(",")) for k, val in meta.items()
              if k.startswith("color.")}
    return Layout(
        walls=grid == "#",
        coins=grid == "c",
        poisons=grid == "p",
        agent_start=starts["A"],
        enemy_starts=(starts["1"], starts["2"]),
        patrols=patrols,
        colors=colors,
        entangle_seed=int(meta.get("entangle_seed", 0)),
        version=int(meta.get("version", 0)),
        sha256=hashlib.sha256(raw).hexdigest(),
    )


def entangle_matrix(layout: Layout, seed: int) -> np.ndarray:
    rng = np.random.default_rng([layout.entangle_seed, int(seed)])
    n = 6 * layout.walls.size
    return rng.uniform(-1.0, 1.0, size=(n, n))


class MazeGrid(Env):
    env_id = "mazegrid"
    n_actions = 4
    max_steps = 200

    def __init__(self, encoding: str = "object_map", layout: Layout | None = None, matrix_seed: int = 0):
        super().__init__()
        if encoding not in ENCODINGS:
            raise ValueError(f"unknown MazeGrid encoding {encoding!r}")
        self.layout = layout or load_layout()
        self.encoding = encoding
        h, w = self.layout.shape
        self.obs_dim = 3 * h * w if encoding == "rgb" else 6 * h * w
        self.matrix = entangle_matrix(self.layout, matrix_seed) if encoding == "entangled" else None
        self._open = ~self.layout.walls
        self._reset(None)
        self.done = True

    def _reset(self, rng):
        lay = self.layout
        self.agent = lay.agent_start
        self.enemies = [list(lay.enemy_starts[0]) + [1], list(lay.enemy_starts[1]) + [1]]
        for e, (_, lo, hi) in zip(self.enemies, lay.patrols):
            if e[1] == hi:
                e[2] = -1
        self.coins = lay.coins.copy()
        self.poisons = lay.poisons.copy()
        self.coins_left = int(self.coins.sum())

    def _step(self, action):
        dr, dc = ACTIONS[action]
        r, c = self.agent
        nr, nc = r + dr, c + dc
        if self.layout.walls[nr, nc]:
            nr, nc = r, c
        old_enemies = [(e[0], e[1]) for e in self.enemies]
        for e, (_, lo, hi) in zip(self.enemies, self.layout.patrols):
            col = e[1] + e[2]
            if col < lo or col > hi:
                e[2] = -e[2]
                col = e[1] + e[2]
            e[1] = col
        self.agent = (nr, nc)
        for (er, ec), e in zip(old_enemies, self.enemies):
            # same final cell, or the agent walked into where the enemy stood (covers swaps)
            if (nr, nc) == (e[0], e[1]) or (nr, nc) == (er, ec):
                return 0.0, True
        reward = 0.0
        if self.coins[nr, nc]:
            self.coins[nr, nc] = False
            self.coins_left -= 1
            reward = 1.0
        elif self.poisons[nr, nc]:
            self.poisons[nr, nc] = False
            reward = -1.0
        return reward, self.coins_left == 0

    def object_map(self) -> np.ndarray:
        h, w = self.layout.shape
        maps = np.zeros((6, h, w))
        maps[1][self.agent] = 1.0
        for k, e in enumerate(self.enemies):
            maps[2 + k, e[0], e[1]] = 1.0
        maps[4][self.coins] = 1.0
        maps[5][self.poisons] = 1.0
        maps[0] = self._open & ~maps[1:].any(axis=0)
        return maps

    def rgb(self) -> np.ndarray:
        h, w = self.layout.shape
        colors = self.layout.colors
        img = np.zeros((h, w, 3))
        img[:, :] = colors["empty"]
        img[self.layout.walls] = colors["wall"]
        img[self.coins] = colors["coin"]
        img[self.poisons] = colors["poison"]
        img[self.agent] = colors["agent"]
        for k, e in enumerate(self.enemies):
            img[e[0], e[1]] = colors[f"enemy{k + 1}"]
        return img.transpose(2, 0, 1)

    def encode(self, mode: str | None = None) -> np.ndarray:
        mode = mode or self.encoding
        if mode == "object_map":
            return self.object_map().ravel()
        if mode == "rgb":
            return self.rgb().ravel()
        if mode == "entangled":
            matrix = self.matrix if self.matrix is not None else entangle_matrix(self.layout, 0)
            return matrix @ self.object_map().ravel()
        raise ValueError(f"unknown MazeGrid encoding {mode!r}")

    def observe(self):
        return self.encode()

    def get_state(self):
        return (self.agent, [e.copy() for e in self.enemies], self.coins.copy(), self.poisons.copy(),
                self.coins_left, self.t, self.done)

    def set_state(self, state):
        agent, enemies, coins, poisons, left, t, done = state
        self.agent = agent
        self.enemies = [e.copy() for e in enemies]
        self.coins, self.poisons = coins.copy(), poisons.copy()
        self.coins_left, self.t, self.done = left, t, done
