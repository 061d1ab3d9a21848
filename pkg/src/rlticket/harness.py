"""Iterative magnitude pruning experiments.

One run trains the network(s) of an agent, keeps the best evaluation
checkpoint, prunes 20% of the surviving prunable weights by global
magnitude, prepares the next iteration's weights according to the run's
condition, and repeats. Each completed iteration leaves one
:class:`IterationRecord` in the :class:`ImpRunReport`.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import envs
from .agents import (BCConfig, BCTrainer, DQNConfig, DQNTrainer, EvalSchedule, ExpertPolicy, PPOConfig,
                     PPOTrainer, derive_seed, evaluate_policy)
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import NumericError, PreconditionError
from .netcore import InitSnapshot, MaskSet, NetworkSpec, ParamSet, forward, init_network
from .pruning import (CONDITIONS, Condition, global_magnitude_prune, permute_mask_and_weights,
                      permute_surviving_weights, random_global_mask, rewind, round_half_up, sparsity_stats)

log = logging.getLogger(__name__)

ALGORITHMS = ("dqn", "ppo", "bc")


@dataclass
class ImpConfig:
    env_id: str = "cartpole"
    encoding: str = ""
    algorithm: str = "ppo"
    hidden: tuple = (128, 128)
    activation: str = "relu"
    condition: str = "mask_weights"
    iterations: int = 20
    prune_fraction: float = 0.2
    budget: int = 80_000
    eval_points: int = 20
    eval_episodes: int = 20
    seed: int = 0
    rewind_step: int = 0
    prune_critic: bool = False
    init_scheme: str = "kaiming-uniform"
    input_rescale: float = 1.0
    input_keep: Optional[tuple] = None
    expert_path: str = ""
    ppo: PPOConfig = field(default_factory=PPOConfig)
    dqn: DQNConfig = field(default_factory=DQNConfig)
    bc: BCConfig = field(default_factory=BCConfig)

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.input_keep is not None:
            self.input_keep = tuple(int(i) for i in self.input_keep)
        self.validate()

    def validate(self):
        if self.env_id not in envs.ENV_IDS:
            raise ValueError(f"unknown env_id {self.env_id!r}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.condition not in CONDITIONS:
            raise ValueError(f"unknown condition {self.condition!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.budget < 1 or self.eval_points < 1 or self.eval_episodes < 1:
            raise ValueError("budgets and evaluation counts must be positive")
        if not 0.0 < self.prune_fraction < 1.0:
            raise ValueError("prune_fraction must lie in (0, 1)")
        if self.rewind_step < 0:
            raise ValueError("rewind_step must be >= 0")
        if self.input_keep is not None and len(self.input_keep) == 0:
            raise ValueError("input_keep must not be empty")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        d["input_keep"] = None if self.input_keep is None else list(self.input_keep)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ImpConfig":
        d = dict(d)
        subs = {"ppo": PPOConfig, "dqn": DQNConfig, "bc": BCConfig}
        for key, typ in subs.items():
            if isinstance(d.get(key), dict):
                d[key] = typ(**d[key])
        return cls(**d)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **kw) -> "ImpConfig":
        return dataclasses.replace(self, **kw)

    @property
    def run_id(self) -> str:
        return f"{self.env_id}-{self.algorithm}-{self.condition}-s{self.seed}-{self.config_hash()[:8]}"


@dataclass
class IterationRecord:
    iteration: int
    frac_remaining: float
    per_layer_remaining: list
    alive_count: int
    best_return: float
    best_step: int
    eliminated_inputs: list
    wall_clock: float
    curve: list = field(default_factory=list)
    failed: bool = False


@dataclass
class ImpRunReport:
    run_id: str
    config: dict
    config_hash: str
    layout_hash: str
    random_return: float
    records: list = field(default_factory=list)
    status: str = "ok"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ImpRunReport":
        d = dict(d)
        d["records"] = [IterationRecord(**r) for r in d.get("records", [])]
        return cls(**d)

    def save(self, path):
        from .checkpoint import atomic_write_bytes
        atomic_write_bytes(path, json.dumps(self.to_dict(), indent=1, sort_keys=True).encode())

    @classmethod
    def load(cls, path) -> "ImpRunReport":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @property
    def dense_best(self) -> float:
        return self.records[0].best_return

    def normalized(self) -> list:
        return normalized_performance(self, self.dense_best, self.random_return)


@dataclass
class IterationArtifacts:
    """What crossed one iteration boundary; handed to the ``on_iteration`` hook."""

    iteration: int
    trained: list            # best-checkpoint params of every net
    masks: list              # masks used during this iteration
    pruned_masks: Optional[MaskSet]   # prune output over the prunable nets (None for random_reinit / last)
    next_params: Optional[list]
    next_masks: Optional[list]
    rewind_target: list      # per-net params the condition draws initial values from
    prunable: list


def normalized_performance(report: ImpRunReport, dense_best: float, random_return: float) -> list:
    """(best - random) / (dense_best - random) per iteration."""
    denom = dense_best - random_return
    if denom == 0:
        raise ValueError("dense best equals the random-policy return; normalization undefined")
    return [(r.best_return - random_return) / denom for r in report.records]


def env_factory(cfg: ImpConfig) -> Callable:
    encoding = cfg.encoding or None
    if cfg.env_id != "mazegrid":
        encoding = None
    if encoding == "entangled":
        # build the 1200x1200 matrix once and share it between copies
        proto = envs.make(cfg.env_id, encoding, cfg.seed)
        from .envs.mazegrid import MazeGrid

        def make():
            env = MazeGrid("object_map", layout=proto.layout)
            env.encoding, env.matrix = "entangled", proto.matrix
            return env
        return make
    return lambda: envs.make(cfg.env_id, encoding, cfg.seed)


def layout_hash(cfg: ImpConfig) -> str:
    if cfg.env_id == "mazegrid":
        return envs.load_layout().sha256
    return ""


def random_policy_return(env_id: str, encoding: str = "", seed: int = 0, n_episodes: int = 100) -> float:
    """Mean return of the uniform random policy."""
    make = env_factory(ImpConfig(env_id=env_id, encoding=encoding, seed=seed))
    rng = np.random.default_rng(derive_seed(seed, 104729))
    n_actions = make().n_actions
    returns = evaluate_policy(lambda obs: rng.integers(n_actions, size=len(obs)), make, n_episodes,
                              derive_seed(seed, 31))
    return float(np.mean(returns))


def evaluate(spec: NetworkSpec, params: ParamSet, masks: Optional[MaskSet], make_env: Callable, n_episodes: int,
             seed: int):
    """Greedy rollouts; returns ``(mean_return, per_episode_returns)``."""
    if masks is not None:
        params = ParamSet([w * m for w, m in zip(params.weights, masks.masks)], params.biases)
    returns = evaluate_policy(lambda obs: forward(params, None, obs, spec.activation).argmax(axis=1),
                              make_env, n_episodes, seed)
    return float(np.mean(returns)), returns


def build_specs(cfg: ImpConfig, obs_dim: int, n_actions: int) -> list:
    sizes = (obs_dim, *cfg.hidden)
    if cfg.algorithm == "ppo":
        return [NetworkSpec((*sizes, n_actions), cfg.activation, "softmax-logits"),
                NetworkSpec((*sizes, 1), cfg.activation, "linear")]
    head = "linear" if cfg.algorithm == "dqn" else "softmax-logits"
    return [NetworkSpec((*sizes, n_actions), cfg.activation, head)]


def load_expert(path) -> ExpertPolicy:
    if not path:
        raise PreconditionError("behavioral cloning needs an expert checkpoint (expert_path)")
    specs, params_list, _, _, _ = load_checkpoint(path)
    return ExpertPolicy(specs[0], params_list[0])


def build_trainer(cfg: ImpConfig, specs, make_env, expert: Optional[ExpertPolicy] = None):
    if cfg.algorithm == "ppo":
        return PPOTrainer(specs[0], specs[1], make_env, cfg.ppo)
    if cfg.algorithm == "dqn":
        integer_obs = cfg.env_id == "mazegrid" and (cfg.encoding or "object_map") in ("object_map", "rgb")
        return DQNTrainer(specs[0], make_env, cfg.dqn, np.uint8 if integer_obs else np.float64)
    if expert is None:
        expert = load_expert(cfg.expert_path)
    return BCTrainer(expert, specs[0], make_env, cfg.bc)


def input_keep_masks(specs, keep) -> list:
    """Masks that cut every first-layer column outside ``keep``."""
    out = []
    for spec in specs:
        m = MaskSet.ones_for(spec)
        cols = np.zeros(spec.input_dim, dtype=bool)
        cols[list(keep)] = True
        m.masks[0][:, ~cols] = False
        out.append(m)
    return out


def eliminated_inputs(mask: MaskSet) -> list:
    return [int(j) for j in np.flatnonzero(~mask.masks[0].any(axis=0))]


def masked(params: ParamSet, mask: MaskSet) -> ParamSet:
    return ParamSet([w * m for w, m in zip(params.weights, mask.masks)], [b.copy() for b in params.biases])


def _fresh_init(specs, cfg: ImpConfig, seed_key):
    params, snaps = [], []
    for n, spec in enumerate(specs):
        p, s = init_network(spec, cfg.init_scheme, cfg.input_rescale, derive_seed(*seed_key, n))
        params.append(p)
        snaps.append(s)
    return params, snaps


def run_imp(cfg: ImpConfig, expert: Optional[ExpertPolicy] = None, out_dir=None,
            on_iteration: Optional[Callable[[IterationArtifacts], None]] = None,
            random_return: Optional[float] = None, progress: Optional[Callable[[str], None]] = None) -> ImpRunReport:
    """Run the full train -> prune -> reset loop for one (condition, seed)."""
    cfg.validate()
    make_env = env_factory(cfg)
    probe = make_env()
    specs = build_specs(cfg, probe.obs_dim, probe.n_actions)
    trainer = build_trainer(cfg, specs, make_env, expert)
    if cfg.rewind_step > cfg.budget:
        raise PreconditionError(f"rewind_step {cfg.rewind_step} lies beyond the per-iteration budget {cfg.budget}")
    prunable = [0, 1] if (cfg.algorithm == "ppo" and cfg.prune_critic) else [0]
    if random_return is None:
        random_return = random_policy_return(cfg.env_id, cfg.encoding, cfg.seed)
    report = ImpRunReport(cfg.run_id, cfg.to_dict(), cfg.config_hash(), layout_hash(cfg), random_return)
    if out_dir is not None:
        out_dir = Path(out_dir)
        (out_dir / cfg.run_id).mkdir(parents=True, exist_ok=True)

    params, snaps = _fresh_init(specs, cfg, (cfg.seed, 0))
    if cfg.input_keep is not None:
        masks = input_keep_masks(specs, cfg.input_keep)
    else:
        masks = [MaskSet.ones_for(s) for s in specs]
    params = [masked(p, m) for p, m in zip(params, masks)]
    rewind_target = [s.params for s in snaps]
    n_layers = [len(specs[i].layer_sizes) - 1 for i in prunable]
    total_prunable = sum(sum(MaskSet.ones_for(specs[i]).sizes()) for i in prunable)

    for k in range(cfg.iterations):
        t0 = time.time()
        eval_seed = derive_seed(cfg.seed, k, 2)
        policy = trainer.policy

        def eval_fn(plist):
            eval_fn.calls += 1
            return np.mean(evaluate_policy(policy(plist), make_env, cfg.eval_episodes,
                                           derive_seed(eval_seed, eval_fn.calls)))
        eval_fn.calls = 0
        ckpt_steps = (cfg.rewind_step,) if (k == 0 and cfg.rewind_step > 0) else ()
        schedule = EvalSchedule(cfg.budget, cfg.eval_points, eval_fn, ckpt_steps)
        prune_masks = MaskSet.concat(*[masks[i] for i in prunable])
        glob, per_layer = sparsity_stats(prune_masks)
        try:
            result = trainer.train(params, masks, cfg.budget, derive_seed(cfg.seed, k, 1), schedule)
        except NumericError as exc:
            log.warning("iteration %d failed: %s", k, exc)
            report.records.append(IterationRecord(k, glob, per_layer, sum(prune_masks.alive_counts()),
                                                  float("nan"), 0, eliminated_inputs(masks[0]),
                                                  time.time() - t0, [], failed=True))
            report.status = "failed"
            break
        rec = IterationRecord(
            iteration=k,
            frac_remaining=glob,
            per_layer_remaining=per_layer,
            alive_count=sum(prune_masks.alive_counts()),
            best_return=result.best_return,
            best_step=result.best_step,
            eliminated_inputs=eliminated_inputs(masks[0]),
            wall_clock=time.time() - t0,
            curve=[list(c) for c in result.curve],
        )
        report.records.append(rec)
        if progress:
            progress(f"{cfg.run_id} it={k} remaining={glob:.4f} best={rec.best_return:.2f}")
        if out_dir is not None:
            save_checkpoint(out_dir / cfg.run_id / f"iter_{k:02d}.npz", specs, result.best_params, masks,
                            {"run_id": cfg.run_id, "iteration": k, "config_hash": cfg.config_hash(),
                             "best_return": rec.best_return, "best_step": rec.best_step})
        if k == 0 and cfg.rewind_step > 0:
            if cfg.rewind_step not in result.checkpoints:
                raise PreconditionError(f"no checkpoint recorded at step {cfg.rewind_step}")
            rewind_target = result.checkpoints[cfg.rewind_step]

        if k == cfg.iterations - 1:
            if on_iteration:
                on_iteration(IterationArtifacts(k, result.best_params, masks, None, None, None, rewind_target,
                                                prunable))
            break
        next_params, next_masks, pruned = _next_iteration(cfg, specs, result.best_params, masks, rewind_target,
                                                          prunable, n_layers, total_prunable, k)
        if on_iteration:
            # copies: the next iteration trains next_params in place
            on_iteration(IterationArtifacts(k, result.best_params, masks, pruned, [p.copy() for p in next_params],
                                            [m.copy() for m in next_masks], rewind_target, prunable))
        params, masks = next_params, next_masks

    if out_dir is not None:
        report.save(out_dir / f"{cfg.run_id}.json")
    return report


def _next_iteration(cfg, specs, trained, masks, rewind_target, prunable, n_layers, total_prunable, k):
    cond = Condition(cfg.condition)
    perm_seed = derive_seed(cfg.seed, k, 3)
    target_snap = InitSnapshot(ParamSet.concat(*[rewind_target[i] for i in prunable]), cfg.seed)
    cur_masks = MaskSet.concat(*[masks[i] for i in prunable])
    cur = ParamSet.concat(*[trained[i] for i in prunable])
    next_params = [None] * len(specs)
    next_masks = [m.copy() for m in masks]
    pruned = None

    if cond == Condition.RANDOM_REINIT:
        alive = sum(cur_masks.alive_counts())
        n_alive = alive - round_half_up(cfg.prune_fraction * alive)
        fresh, _ = _fresh_init(specs, cfg, (cfg.seed, k + 1, 5))
        shapes = [w.shape for i in prunable for w in fresh[i].weights]
        new_mask = random_global_mask(shapes, n_alive, np.random.default_rng(perm_seed))
        for j, m in zip(prunable, new_mask.split(n_layers)):
            next_masks[j] = m
        next_params = [masked(p, m) for p, m in zip(fresh, next_masks)]
        return next_params, next_masks, None

    pruned = global_magnitude_prune(cur, cur_masks, cfg.prune_fraction)
    if cond == Condition.MASK_WEIGHTS:
        new_params, new_mask = rewind(cur, target_snap, pruned), pruned
    elif cond == Condition.MASK_PERMUTED:
        new_params, new_mask = permute_surviving_weights(target_snap, pruned, perm_seed), pruned
    else:
        new_params, new_mask = permute_mask_and_weights(target_snap, pruned, perm_seed)
    for j, (p, m) in enumerate(zip(new_params.split(n_layers), new_mask.split(n_layers))):
        next_params[prunable[j]] = p
        next_masks[prunable[j]] = m
    for i in range(len(specs)):
        if next_params[i] is None:
            # unpruned nets (the PPO critic by default) restart from their rewind target
            next_params[i] = masked(rewind_target[i], next_masks[i])
    return next_params, next_masks, pruned


def late_rewind(cfg: ImpConfig, **kw) -> ImpRunReport:
    """IMP with the rewind target taken from iteration 0 at ``cfg.rewind_step`` env steps."""
    if cfg.rewind_step > cfg.budget:
        raise PreconditionError(f"rewind_step {cfg.rewind_step} lies beyond the per-iteration budget {cfg.budget}")
    return run_imp(cfg, **kw)


def train_dense(cfg: ImpConfig, expert: Optional[ExpertPolicy] = None, seed_offset: int = 0):
    """Single dense training run (no pruning). Returns the TrainResult."""
    make_env = env_factory(cfg)
    probe = make_env()
    specs = build_specs(cfg, probe.obs_dim, probe.n_actions)
    trainer = build_trainer(cfg, specs, make_env, expert)
    params, _ = _fresh_init(specs, cfg, (cfg.seed, 0))
    masks = input_keep_masks(specs, cfg.input_keep) if cfg.input_keep is not None else [None] * len(specs)
    params = [masked(p, m) if m is not None else p for p, m in zip(params, masks)]
    eval_seed = derive_seed(cfg.seed, seed_offset, 2)

    def eval_fn(plist):
        eval_fn.calls += 1
        return np.mean(evaluate_policy(trainer.policy(plist), make_env, cfg.eval_episodes,
                                       derive_seed(eval_seed, eval_fn.calls)))
    eval_fn.calls = 0
    schedule = EvalSchedule(cfg.budget, cfg.eval_points, eval_fn)
    return specs, trainer.train(params, masks, cfg.budget, derive_seed(cfg.seed, seed_offset, 1), schedule)
