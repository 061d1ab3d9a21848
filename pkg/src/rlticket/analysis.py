"""Post-hoc interpretation of IMP masks: which input dimensions survive, and how layers thin out."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .netcore import MaskSet, ParamSet


@dataclass
class InputMaskSummary:
    cum_magnitude: np.ndarray   # per input dim: sum_i |W1[i, j] * M1[i, j]|
    alive_count: np.ndarray     # per input dim: surviving first-layer connections
    n_units: int                # rows of the first layer
    channel_shape: Optional[tuple] = None

    @property
    def eliminated(self) -> np.ndarray:
        return self.alive_count == 0

    @property
    def alive_fraction(self) -> np.ndarray:
        return self.alive_count / self.n_units

    def channel_of(self, dim: int):
        if self.channel_shape is None:
            return ""
        return int(dim // int(np.prod(self.channel_shape[1:])))


def input_column_stats(params: ParamSet, masks: MaskSet, channel_shape=None) -> InputMaskSummary:
    w, m = params.weights[0], masks.masks[0]
    cum = np.abs(w * m).sum(axis=0)
    alive = m.sum(axis=0).astype(int)
    if channel_shape is not None and int(np.prod(channel_shape)) != w.shape[1]:
        raise ValueError(f"channel shape {channel_shape} does not cover {w.shape[1]} inputs")
    return InputMaskSummary(cum, alive, w.shape[0], tuple(channel_shape) if channel_shape is not None else None)


def eliminated_dims(masks: MaskSet) -> list:
    """Input indices whose entire first-layer mask column is zero."""
    return [int(j) for j in np.flatnonzero(~masks.masks[0].any(axis=0))]


def channel_ratio(summary: InputMaskSummary, channel_shape=None) -> np.ndarray:
    """Alive fraction of first-layer connections per observation channel."""
    shape = channel_shape or summary.channel_shape
    if shape is None:
        raise ValueError("channel_ratio needs a channel shape")
    n_channels = shape[0]
    per_dim = summary.alive_fraction.reshape(n_channels, -1)
    return per_dim.mean(axis=1)


def layer_ratio_curve(reports) -> dict:
    """run_id -> (iterations x layers) array of per-layer remaining fractions."""
    return {r.run_id: np.array([rec.per_layer_remaining for rec in r.records]) for r in reports}


def moderate_sparsity_iteration(report, threshold: float = 0.9) -> Optional[int]:
    """Latest iteration whose normalized performance is at least ``threshold``."""
    norm = report.normalized()
    ok = [k for k, v in enumerate(norm) if v >= threshold and not report.records[k].failed]
    return ok[-1] if ok else None


def first_drop_iteration(report, threshold: float = 0.9) -> Optional[int]:
    """First iteration whose normalized performance falls below ``threshold``."""
    for k, v in enumerate(report.normalized()):
        if v < threshold:
            return k
    return None


def mask_transfer_train(config, input_keep_set: Sequence[int], expert=None):
    """Train a fresh dense agent that only sees ``input_keep_set``; returns the evaluation curve."""
    from .harness import train_dense

    keep = sorted({int(i) for i in input_keep_set})
    if not keep:
        raise ValueError("input keep set must not be empty")
    _, result = train_dense(config.replace(input_keep=tuple(keep)), expert=expert)
    return result.curve


def write_input_summary(path, rows):
    """rows: iterable of (run_id, InputMaskSummary)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["run_id", "dim", "channel", "alive_count", "cum_magnitude", "eliminated"])
        for run_id, s in rows:
            for j in range(len(s.alive_count)):
                out.writerow([run_id, j, s.channel_of(j), int(s.alive_count[j]), f"{s.cum_magnitude[j]:.10g}",
                              int(s.eliminated[j])])


def write_layer_ratios(path, reports):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["run_id", "iteration", "layer", "remaining"])
        for r in reports:
            for rec in r.records:
                for layer, frac in enumerate(rec.per_layer_remaining):
                    out.writerow([r.run_id, rec.iteration, layer, f"{frac:.10g}"])
