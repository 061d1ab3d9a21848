"""Command-line front end.

    rlticket train-expert --env cartpole --out experts/cartpole.npz
    rlticket imp --config cartpole_ppo.ini --preset desk --out-dir runs/cartpole
    rlticket sweep --config a.ini --config b.ini --out-dir runs
    rlticket analyze runs/cartpole
    rlticket plot-export runs/cartpole/aggregate.csv

Exit codes: 0 success, 1 expert threshold not reached, 2 config error,
3 precondition failure, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, analysis, plotting
from .checkpoint import atomic_write_bytes, load_checkpoint, save_checkpoint
from .config import ConfigError, ExperimentConfig, apply_preset, load_config, parse_config, serialize_config, \
    shipped_config
from .errors import NumericError, PreconditionError
from .harness import ImpConfig, ImpRunReport, layout_hash, run_imp, train_dense
from .pruning import CONDITIONS

log = logging.getLogger("rlticket")

EXIT_OK, EXIT_THRESHOLD, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_NUMERIC = 0, 1, 2, 3, 4

AGGREGATE_HEADER = ["run_id", "condition", "seed", "iteration", "frac_remaining", "best_return",
                    "normalized_return", "best_step", "n_eliminated_inputs"]

# teacher sizes and "solved" thresholds for train-expert defaults
EXPERT_DEFAULTS = {
    "cartpole": {"hidden": (64, 64), "threshold": 195.0, "budget": 80_000, "preset": "cartpole_ppo"},
    "acrobot": {"hidden": (128, 64), "threshold": -100.0, "budget": 500_000, "preset": "acrobot_ppo"},
}

MAZE_CHANNELS = (6, 10, 20)


@dataclass
class RunManifest:
    config_hash: str
    code_version: str
    layout_hash: str
    seeds: list
    outputs: dict = field(default_factory=dict)   # relative path -> sha256
    started: str = ""
    finished: str = ""

    def add(self, root: Path, path: Path):
        self.outputs[str(Path(path).relative_to(root))] = file_sha256(path)

    def save(self, path):
        atomic_write_bytes(path, json.dumps(dataclasses.asdict(self), indent=1, sort_keys=True).encode())

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))

    def verify(self, root) -> list:
        """Relative paths whose current contents no longer match the recorded hash."""
        root = Path(root)
        return [rel for rel, digest in sorted(self.outputs.items())
                if not (root / rel).exists() or file_sha256(root / rel) != digest]


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _int_list(text: str) -> list:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad integer list {text!r}") from exc


# ---------------------------------------------------------------- config


def resolve_config(args) -> ExperimentConfig:
    """Config file (or bundled preset name) plus command-line overrides."""
    src = args.config
    if src is None:
        raise ConfigError("--config is required")
    path = Path(src)
    exp = load_config(path) if path.exists() else parse_config(_shipped_or_fail(src))
    if getattr(args, "preset", None):
        exp = apply_preset(exp, args.preset)
    base = exp.base
    over = {}
    if getattr(args, "rewind_step", None) is not None:
        over["rewind_step"] = args.rewind_step
    if getattr(args, "prune_critic", False):
        over["prune_critic"] = True
    if getattr(args, "iterations", None) is not None:
        over["iterations"] = args.iterations
    if getattr(args, "budget", None) is not None:
        over["budget"] = args.budget
    try:
        base = base.replace(**over) if over else base
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    conditions = list(exp.conditions)
    if getattr(args, "conditions", None):
        conditions = [c.strip() for c in args.conditions.split(",") if c.strip()]
        bad = [c for c in conditions if c not in CONDITIONS]
        if bad:
            raise ConfigError(f"unknown conditions: {bad}")
    seeds = _int_list(args.seed_list) if getattr(args, "seed_list", None) else list(exp.seeds)
    if not seeds or not conditions:
        raise ConfigError("need at least one seed and one condition")
    return ExperimentConfig(base, conditions, seeds)


def _shipped_or_fail(name: str) -> str:
    try:
        return shipped_config(name)
    except FileNotFoundError as exc:
        raise ConfigError(f"config {name!r} is neither a file nor a bundled preset") from exc


# ---------------------------------------------------------------- imp


def _run_one(cfg_dict: dict, out_dir: str, resume: bool) -> str:
    cfg = ImpConfig.from_dict(cfg_dict)
    path = Path(out_dir) / f"{cfg.run_id}.json"
    if resume and path.exists():
        rep = ImpRunReport.load(path)
        if rep.config_hash == cfg.config_hash() and rep.status == "ok":
            log.info("reusing %s", path.name)
            return str(path)
    run_imp(cfg, out_dir=out_dir, progress=log.info)
    return str(path)


def run_experiment(exp: ExperimentConfig, out_dir, workers: int = 1, resume: bool = False) -> list:
    """Execute every (condition, seed) run; returns the loaded reports in (condition, seed) order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [cfg.to_dict() for cfg in exp.runs()]
    if workers <= 1:
        paths = [_run_one(j, str(out_dir), resume) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            paths = list(pool.map(_run_one, jobs, [str(out_dir)] * len(jobs), [resume] * len(jobs)))
    return [ImpRunReport.load(p) for p in paths]


def aggregate_rows(reports) -> list:
    rows = []
    for rep in reports:
        norm = rep.normalized() if rep.records else []
        for rec, nv in zip(rep.records, norm):
            rows.append({
                "run_id": rep.run_id,
                "condition": rep.config["condition"],
                "seed": rep.config["seed"],
                "iteration": rec.iteration,
                "frac_remaining": repr(float(rec.frac_remaining)),
                "best_return": repr(float(rec.best_return)),
                "normalized_return": repr(float(nv)),
                "best_step": rec.best_step,
                "n_eliminated_inputs": len(rec.eliminated_inputs),
            })
    return rows


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="") as fh:
        out = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        out.writeheader()
        out.writerows(rows)
    tmp.replace(path)
    return path


def read_csv(path) -> list:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_imp(args) -> int:
    exp = resolve_config(args)
    out_dir = Path(args.out_dir)
    started = _now()
    reports = run_experiment(exp, out_dir, args.workers, args.resume)
    agg = write_csv(out_dir / "aggregate.csv", AGGREGATE_HEADER, aggregate_rows(reports))
    cfg_path = out_dir / "config.ini"
    atomic_write_bytes(cfg_path, serialize_config(exp).encode())
    manifest = RunManifest(hashlib.sha256(serialize_config(exp).encode()).hexdigest()[:16], __version__,
                           layout_hash(exp.base), list(exp.seeds), started=started)
    for rep in reports:
        manifest.add(out_dir, out_dir / f"{rep.run_id}.json")
        for ckpt in sorted((out_dir / rep.run_id).glob("iter_*.npz")):
            manifest.add(out_dir, ckpt)
    manifest.add(out_dir, agg)
    manifest.add(out_dir, cfg_path)
    manifest.finished = _now()
    manifest.save(out_dir / "manifest.json")
    print(f"{len(reports)} runs -> {agg}")
    if any(r.status != "ok" for r in reports):
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------- analyze / plot


def load_reports(report_dir) -> list:
    out = []
    for p in sorted(Path(report_dir).glob("*.json")):
        if p.name == "manifest.json":
            continue
        d = json.loads(p.read_text())
        if "records" in d and "run_id" in d:
            out.append(ImpRunReport.from_dict(d))
    return out


def analysis_iteration(rep: ImpRunReport) -> int:
    """Moderate-sparsity iteration, or the last finished one if none qualifies."""
    k = analysis.moderate_sparsity_iteration(rep)
    if k is None:
        k = max(r.iteration for r in rep.records if not r.failed)
    return k


def cmd_analyze(args) -> int:
    report_dir = Path(args.report_dir)
    reports = load_reports(report_dir)
    if not reports:
        raise PreconditionError(f"no run reports in {report_dir}")
    out_dir = Path(args.out_dir) if args.out_dir else report_dir
    analysis.write_layer_ratios(out_dir / "layer_ratios.csv", reports)
    summaries = []
    for rep in reports:
        ckpt = report_dir / rep.run_id / f"iter_{analysis_iteration(rep):02d}.npz"
        if not ckpt.exists():
            log.warning("missing checkpoint %s; skipped in input summary", ckpt)
            continue
        _, params, masks, _, _ = load_checkpoint(ckpt)
        cfg = rep.config
        shape = MAZE_CHANNELS if cfg["env_id"] == "mazegrid" and cfg["encoding"] in ("", "object_map") else None
        summaries.append((rep.run_id, analysis.input_column_stats(params[0], masks[0], shape)))
    analysis.write_input_summary(out_dir / "input_summary.csv", summaries)
    write_csv(out_dir / "normalized.csv", ["condition", "iteration", "frac_remaining", "mean", "std", "n_seeds"],
              normalized_table(reports))
    print(f"analyzed {len(reports)} runs -> {out_dir}")
    return EXIT_OK


def normalized_table(reports) -> list:
    acc = defaultdict(list)
    frac = {}
    for rep in reports:
        cond = rep.config["condition"]
        for rec, v in zip(rep.records, rep.normalized()):
            acc[(cond, rec.iteration)].append(v)
            frac[(cond, rec.iteration)] = rec.frac_remaining
    rows = []
    for (cond, it), vals in sorted(acc.items(), key=lambda kv: (CONDITIONS.index(kv[0][0]), kv[0][1])):
        rows.append({"condition": cond, "iteration": it, "frac_remaining": repr(float(frac[(cond, it)])),
                     "mean": repr(float(np.mean(vals))), "std": repr(float(np.std(vals))), "n_seeds": len(vals)})
    return rows


def cmd_plot(args) -> int:
    written = []
    for src in args.csv:
        src = Path(src)
        if not src.exists():
            raise PreconditionError(f"{src} does not exist")
        rows = read_csv(src)
        out_dir = Path(args.out_dir) if args.out_dir else src.parent
        header = set(rows[0]) if rows else set()
        if {"best_return", "normalized_return"} <= header:
            written.append(plotting.plot_conditions(rows, out_dir / f"{src.stem}_best_return.svg", args.title))
            written.append(plotting.plot_conditions(rows, out_dir / f"{src.stem}_normalized.svg", args.title,
                                                    value="normalized_return"))
        elif {"layer", "remaining"} <= header:
            written.append(plotting.plot_layer_ratios(rows, out_dir / f"{src.stem}.svg", args.title))
        else:
            raise ConfigError(f"{src} is neither an aggregate nor a layer-ratio CSV")
    for p in written:
        print(p)
    return EXIT_OK


def cmd_sweep(args) -> int:
    status = EXIT_OK
    for src in args.config:
        sub = argparse.Namespace(**{**vars(args), "config": src})
        exp = resolve_config(sub)
        name = Path(src).stem
        out_dir = Path(args.out_dir) / name
        code = cmd_imp(argparse.Namespace(**{**vars(sub), "out_dir": str(out_dir)}))
        status = max(status, code)
        cmd_analyze(argparse.Namespace(report_dir=str(out_dir), out_dir=None))
        cmd_plot(argparse.Namespace(csv=[str(out_dir / "aggregate.csv"), str(out_dir / "layer_ratios.csv")],
                                    out_dir=None, title=f"{exp.base.env_id} {exp.base.algorithm}"))
    return status


# ---------------------------------------------------------------- expert


def cmd_train_expert(args) -> int:
    defaults = EXPERT_DEFAULTS.get(args.env)
    if defaults is None:
        raise ConfigError(f"no expert recipe for env {args.env!r}")
    exp = parse_config(shipped_config(defaults["preset"])) if args.config is None else load_config(args.config)
    hidden = tuple(_int_list(args.hidden)) if args.hidden else defaults["hidden"]
    budget = args.budget if args.budget is not None else defaults["budget"]
    threshold = args.threshold if args.threshold is not None else defaults["threshold"]
    try:
        cfg = exp.base.replace(env_id=args.env, algorithm="ppo", hidden=hidden, budget=budget, seed=args.seed,
                               condition="mask_weights", input_keep=None)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    started = _now()
    specs, result = train_dense(cfg)
    reached = bool(result.best_return >= threshold)
    meta = {"env_id": args.env, "seed": args.seed, "budget": budget, "threshold": threshold,
            "best_return": result.best_return, "best_step": result.best_step, "threshold_reached": reached,
            "config_hash": cfg.config_hash()}
    out = Path(args.out)
    digest = save_checkpoint(out, specs[:1], result.best_params[:1], None, meta)
    manifest = RunManifest(cfg.config_hash(), __version__, layout_hash(cfg), [args.seed], started=started)
    manifest.add(out.parent, out)
    manifest.finished = _now()
    manifest.save(out.with_suffix(".manifest.json"))
    print(f"expert {out} sha256={digest[:16]} best={result.best_return:.2f} threshold={threshold}")
    if not reached:
        log.warning("expert best return %.2f is below the threshold %.2f", result.best_return, threshold)
        return EXIT_THRESHOLD
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rlticket", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--preset", choices=("desk", "full"))
        p.add_argument("--seed-list", help="comma-separated seeds, e.g. 0,1,2")
        p.add_argument("--conditions", help="comma-separated subset of " + ",".join(CONDITIONS))
        p.add_argument("--out-dir", required=True)
        p.add_argument("--workers", type=int, default=1, help="parallel (condition, seed) runs")
        p.add_argument("--rewind-step", type=int, help="late rewinding: env step of the rewind checkpoint")
        p.add_argument("--prune-critic", action="store_true", help="prune the PPO critic jointly with the actor")
        p.add_argument("--iterations", type=int)
        p.add_argument("--budget", type=int, help="env steps per IMP iteration")
        p.add_argument("--resume", action="store_true", help="skip runs whose report already exists")

    p = sub.add_parser("imp", help="run IMP for every (condition, seed) in a config")
    p.add_argument("--config", required=True, help="INI file or bundled preset name")
    run_flags(p)
    p.set_defaults(func=cmd_imp)

    p = sub.add_parser("sweep", help="imp + analyze + plot-export for several configs")
    p.add_argument("--config", required=True, action="append")
    run_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("train-expert", help="train a dense PPO teacher for behavioral cloning")
    p.add_argument("--env", default="cartpole", choices=sorted(EXPERT_DEFAULTS))
    p.add_argument("--config", help="INI file whose [ppo] section is used")
    p.add_argument("--hidden", help="comma-separated hidden sizes")
    p.add_argument("--budget", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_expert)

    p = sub.add_parser("analyze", help="input-mask and layer-ratio CSVs from a report directory")
    p.add_argument("report_dir")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("plot-export", help="SVG figures from aggregate or layer-ratio CSVs")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out-dir")
    p.add_argument("--title", default="")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PreconditionError as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
