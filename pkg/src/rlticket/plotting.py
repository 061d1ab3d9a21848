"""SVG figures of IMP sweeps. Output is byte-stable for identical inputs."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .pruning import CONDITIONS  # noqa: E402

SVG_SALT = "rlticket"
COLORS = {"mask_weights": "#1f77b4", "mask_permuted": "#ff7f0e", "permuted_permuted": "#2ca02c",
          "random_reinit": "#d62728"}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def condition_bands(rows, value: str = "best_return") -> dict:
    """condition -> (frac_remaining, mean, std) across seeds, aligned by iteration.

    ``rows`` are aggregate-CSV records (dicts with condition, seed, iteration,
    frac_remaining and ``value``); only iterations every seed reached are kept.
    """
    table = defaultdict(lambda: defaultdict(dict))
    frac = defaultdict(dict)
    for row in rows:
        cond, it = row["condition"], int(row["iteration"])
        table[cond][row["seed"]][it] = float(row[value])
        frac[cond][it] = float(row["frac_remaining"])
    out = {}
    for cond, by_seed in table.items():
        iters = sorted(set.intersection(*(set(v) for v in by_seed.values())))
        vals = np.array([[by_seed[s][k] for k in iters] for s in sorted(by_seed)])
        out[cond] = (np.array([frac[cond][k] for k in iters]), vals.mean(axis=0), vals.std(axis=0))
    return out


def plot_conditions(rows, path, title: str = "", value: str = "best_return"):
    """Best return against fraction of weights remaining (log x), mean +/- 1 std per condition."""
    fig, ax = plt.subplots(figsize=(6, 4))
    bands = condition_bands(rows, value)
    for cond in [c for c in CONDITIONS if c in bands]:
        frac, mean, std = bands[cond]
        color = COLORS.get(cond)
        ax.plot(frac, mean, marker="o", ms=3, label=cond, color=color)
        ax.fill_between(frac, mean - std, mean + std, alpha=0.2, color=color, linewidth=0)
    ax.set_xscale("log")
    ax.invert_xaxis()
    ax.set_xlabel("fraction of weights remaining")
    ax.set_ylabel(value.replace("_", " "))
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    return _save(fig, path)


def plot_layer_ratios(rows, path, title: str = ""):
    """Per-layer remaining fraction against iteration from ``layer_ratios.csv`` rows, one line per layer.

    Seeds of the same run are averaged by grouping on layer only, so pass rows of one condition.
    """
    acc = defaultdict(lambda: defaultdict(list))
    for row in rows:
        acc[int(row["layer"])][int(row["iteration"])].append(float(row["remaining"]))
    fig, ax = plt.subplots(figsize=(6, 4))
    for layer in sorted(acc):
        its = sorted(acc[layer])
        ax.plot(its, [np.mean(acc[layer][k]) for k in its], marker=".", label=f"layer {layer}")
    ax.set_yscale("log")
    ax.set_xlabel("IMP iteration")
    ax.set_ylabel("fraction remaining")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_input_mask(alive_fraction, path, obs_names=None, title: str = ""):
    """Bar chart of surviving first-layer connections per input dimension."""
    alive_fraction = np.asarray(alive_fraction)
    fig, ax = plt.subplots(figsize=(max(4, 0.05 * len(alive_fraction) + 3), 3))
    x = np.arange(len(alive_fraction))
    ax.bar(x, alive_fraction, color="#444444")
    if obs_names is not None and len(obs_names) == len(x):
        ax.set_xticks(x)
        ax.set_xticklabels(obs_names, rotation=45, ha="right", fontsize=7)
    ax.set_xlabel("input dimension")
    ax.set_ylabel("alive fraction")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)
