"""Experiment configuration files.

Configs are INI files with one section per module::

    [experiment]   env, algorithm, conditions, seeds, budgets, evaluation
    [network]      hidden sizes, activation, initialization
    [ppo] [dqn] [bc]   algorithm hyperparameters (field names of the trainer configs)

Any key can be overridden from the environment as
``RLTICKET_<SECTION>__<KEY>`` (e.g. ``RLTICKET_PPO__LR=0.001``).
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import os
from dataclasses import dataclass, field
from importlib import resources

from .agents import BCConfig, DQNConfig, PPOConfig
from .harness import ImpConfig
from .pruning import CONDITIONS

ENV_PREFIX = "RLTICKET_"

EXPERIMENT_KEYS = ("env_id", "encoding", "algorithm", "iterations", "prune_fraction", "budget", "eval_points",
                   "eval_episodes", "rewind_step", "prune_critic", "expert_path")
NETWORK_KEYS = ("hidden", "activation", "init_scheme", "input_rescale", "input_keep")
SUBCONFIGS = {"ppo": PPOConfig, "dqn": DQNConfig, "bc": BCConfig}

# Budget scale presets. "full" mirrors the published hyperparameter tables,
# "desk" shrinks only what cannot run on a single CPU in reasonable time.
PRESETS = {
    ("mazegrid", "dqn"): {
        "full": {"budget": 5_000_000, "dqn.buffer_size": 100_000},
        "desk": {"budget": 500_000, "dqn.buffer_size": 20_000},
    },
    ("cartpole", "ppo"): {"full": {"budget": 80_000}, "desk": {"budget": 80_000}},
    ("cartpole", "bc"): {"full": {"budget": 10_000}, "desk": {"budget": 10_000}},
    ("acrobot", "ppo"): {"full": {"budget": 500_000}, "desk": {"budget": 500_000}},
    ("acrobot", "bc"): {"full": {"budget": 200_000}, "desk": {"budget": 200_000}},
}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass
class ExperimentConfig:
    base: ImpConfig
    conditions: list = field(default_factory=lambda: ["mask_weights"])
    seeds: list = field(default_factory=lambda: [0])

    def runs(self):
        for cond in self.conditions:
            for seed in self.seeds:
                yield self.base.replace(condition=cond, seed=seed)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    if isinstance(value, (list, tuple)):
        return ", ".join(_fmt(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _coerce(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw) if raw.lstrip("-").replace("_", "").isdigit() else int(float(raw))
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw


def _int_list(raw: str, key: str) -> list:
    try:
        return [int(v) for v in raw.replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise ConfigError(f"bad integer list for {key}: {raw!r}") from exc


def parse_config(text: str, environ=None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    _apply_environ(cp, os.environ if environ is None else environ)
    known = {"experiment", "network", *SUBCONFIGS}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    default = ImpConfig()
    kw = {}
    exp = cp["experiment"] if cp.has_section("experiment") else {}
    net = cp["network"] if cp.has_section("network") else {}
    allowed = {"experiment": set(EXPERIMENT_KEYS) | {"conditions", "seeds"}, "network": set(NETWORK_KEYS)}
    for name, section in (("experiment", exp), ("network", net)):
        extra = set(section) - allowed[name]
        if extra:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")
    for key in EXPERIMENT_KEYS:
        if key in exp:
            kw[key] = _coerce(exp[key], getattr(default, key), f"experiment.{key}")
    if "hidden" in net:
        kw["hidden"] = tuple(_int_list(net["hidden"], "network.hidden"))
    if net.get("input_keep", "").strip():
        kw["input_keep"] = tuple(_int_list(net["input_keep"], "network.input_keep"))
    for key in ("activation", "init_scheme", "input_rescale"):
        if key in net:
            kw[key] = _coerce(net[key], getattr(default, key), f"network.{key}")
    for name, typ in SUBCONFIGS.items():
        sub_default = typ()
        vals = {}
        if cp.has_section(name):
            names = {f.name for f in dataclasses.fields(typ)}
            extra = set(cp[name]) - names
            if extra:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")
            for key in cp[name]:
                vals[key] = _coerce(cp[name][key], getattr(sub_default, key), f"{name}.{key}")
        kw[name] = typ(**vals)
    conditions = [c.strip() for c in exp.get("conditions", "mask_weights").split(",") if c.strip()]
    bad = [c for c in conditions if c not in CONDITIONS]
    if bad:
        raise ConfigError(f"unknown conditions: {bad}")
    seeds = _int_list(exp.get("seeds", "0"), "experiment.seeds")
    try:
        base = ImpConfig(condition=conditions[0], seed=seeds[0] if seeds else 0, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return ExperimentConfig(base, conditions, seeds)


def _apply_environ(cp: configparser.ConfigParser, environ):
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX) or "__" not in name[len(ENV_PREFIX):]:
            continue
        section, key = name[len(ENV_PREFIX):].split("__", 1)
        section, key = section.lower(), key.lower()
        if not cp.has_section(section):
            cp.add_section(section)
        cp[section][key] = value


def serialize_config(cfg: ExperimentConfig) -> str:
    b = cfg.base
    cp = configparser.ConfigParser(interpolation=None)
    cp["experiment"] = {key: _fmt(getattr(b, key)) for key in EXPERIMENT_KEYS}
    cp["experiment"]["conditions"] = _fmt(cfg.conditions)
    cp["experiment"]["seeds"] = _fmt(cfg.seeds)
    cp["network"] = {key: _fmt(getattr(b, key)) for key in NETWORK_KEYS}
    for name in SUBCONFIGS:
        sub = getattr(b, name)
        cp[name] = {f.name: _fmt(getattr(sub, f.name)) for f in dataclasses.fields(sub)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def load_config(path, environ=None) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), environ)


def apply_preset(cfg: ExperimentConfig, scale: str) -> ExperimentConfig:
    """Overlay the budget preset for this (env, algorithm) at ``scale`` (desk or full)."""
    if scale not in ("desk", "full"):
        raise ConfigError(f"unknown preset {scale!r}")
    table = PRESETS.get((cfg.base.env_id, cfg.base.algorithm))
    if table is None:
        return cfg
    base = cfg.base
    for key, value in table[scale].items():
        if "." in key:
            sub, attr = key.split(".")
            base = base.replace(**{sub: dataclasses.replace(getattr(base, sub), **{attr: value})})
        else:
            base = base.replace(**{key: value})
    return ExperimentConfig(base, list(cfg.conditions), list(cfg.seeds))


def shipped_config(name: str) -> str:
    """Text of one of the bundled example configs (e.g. ``cartpole_ppo``)."""
    return resources.files("rlticket").joinpath("presets", f"{name}.ini").read_text()


def shipped_config_names() -> list:
    return sorted(p.name[:-4] for p in resources.files("rlticket").joinpath("presets").iterdir()
                  if p.name.endswith(".ini"))
