"""Global magnitude pruning, rewinding and the four sparsity-generating conditions.

Conditions differ in what survives an IMP iteration boundary:

=================  =======  ====  ===========
condition          weights  mask  layer ratio
=================  =======  ====  ===========
mask_weights       yes      yes   yes
mask_permuted      no       yes   yes
permuted_permuted  no       no    yes
random_reinit      no       no    no
=================  =======  ====  ===========

Only weight matrices are prunable; biases are ignored by every count here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .netcore import InitSnapshot, MaskSet, NetworkSpec, ParamSet, check_masks, init_network


class Condition(str, Enum):
    MASK_WEIGHTS = "mask_weights"
    MASK_PERMUTED = "mask_permuted"
    PERMUTED_PERMUTED = "permuted_permuted"
    RANDOM_REINIT = "random_reinit"


CONDITIONS = tuple(c.value for c in Condition)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class PruneReport:
    iteration: int
    global_sparsity_remaining: float
    per_layer_remaining: list = field(default_factory=list)
    newly_pruned_count: int = 0


def global_magnitude_prune(trained: ParamSet, masks: MaskSet, fraction: float) -> MaskSet:
    """Remove ``round(fraction * alive)`` of the smallest-magnitude alive weights.

    Ranking is global over all layers. Equal magnitudes are resolved by layer
    index and then row-major position, both ascending.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"prune fraction must lie in (0, 1), got {fraction}")
    check_masks(trained, masks)
    flat_mask = np.concatenate([m.ravel() for m in masks.masks])
    mags = np.concatenate([np.abs(w).ravel() for w in trained.weights])
    alive_idx = np.flatnonzero(flat_mask)
    n_prune = round_half_up(fraction * alive_idx.size)
    new_flat = flat_mask.copy()
    if n_prune > 0:
        # stable sort keeps (layer, row-major) order among equal magnitudes
        order = np.argsort(mags[alive_idx], kind="stable")
        new_flat[alive_idx[order[:n_prune]]] = False
    out, start = [], 0
    for m in masks.masks:
        out.append(new_flat[start:start + m.size].reshape(m.shape))
        start += m.size
    return MaskSet(out)


def rewind(current: ParamSet, snapshot: InitSnapshot, masks: MaskSet) -> ParamSet:
    """Reset alive weights to their snapshot values; pruned weights become 0."""
    ref = snapshot.params
    if len(current) != len(ref):
        raise ValueError("current parameters and snapshot have different depth")
    for a, b in zip(current.arrays(), ref.arrays()):
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    check_masks(ref, masks)
    return ParamSet([w * m for w, m in zip(ref.weights, masks.masks)], [b.copy() for b in ref.biases])


def permute_surviving_weights(snapshot: InitSnapshot, masks: MaskSet, seed) -> ParamSet:
    """Shuffle the snapshot values among the alive positions of each layer."""
    ref = snapshot.params
    check_masks(ref, masks)
    rng = np.random.default_rng(seed)
    weights = []
    for w, m in zip(ref.weights, masks.masks):
        out = np.zeros_like(w)
        idx = np.flatnonzero(m)
        vals = w.ravel()[idx]
        out.ravel()[idx] = vals[rng.permutation(idx.size)]
        weights.append(out)
    return ParamSet(weights, [b.copy() for b in ref.biases])


def permute_mask_and_weights(snapshot: InitSnapshot, masks: MaskSet, seed):
    """Resample each layer's alive positions (count preserved) and shuffle values into them.

    Returns ``(params, new_masks)``.
    """
    ref = snapshot.params
    check_masks(ref, masks)
    rng = np.random.default_rng(seed)
    weights, new_masks = [], []
    for w, m in zip(ref.weights, masks.masks):
        idx = np.flatnonzero(m)
        vals = w.ravel()[idx]
        new_idx = np.sort(rng.choice(m.size, size=idx.size, replace=False))
        nm = np.zeros(m.size, dtype=bool)
        nm[new_idx] = True
        out = np.zeros(w.size)
        out[new_idx] = vals[rng.permutation(idx.size)]
        weights.append(out.reshape(w.shape))
        new_masks.append(nm.reshape(m.shape))
    return ParamSet(weights, [b.copy() for b in ref.biases]), MaskSet(new_masks)


def random_global_mask(shapes, n_alive: int, rng) -> MaskSet:
    sizes = [int(np.prod(s)) for s in shapes]
    total = sum(sizes)
    if not 0 <= n_alive <= total:
        raise ValueError(f"cannot keep {n_alive} of {total} weights")
    flat = np.zeros(total, dtype=bool)
    flat[rng.choice(total, size=n_alive, replace=False)] = True
    out, start = [], 0
    for s, n in zip(shapes, sizes):
        out.append(flat[start:start + n].reshape(s))
        start += n
    return MaskSet(out)


def random_reinit(spec: NetworkSpec, target_global_sparsity: float, scheme: str = "kaiming-uniform",
                  rescale: float = 1.0, seed=0):
    """Fresh initialization plus a uniformly random global mask.

    ``target_global_sparsity`` is the pruned fraction; the mask keeps
    ``round((1 - sparsity) * total)`` weights anywhere in the network, so
    per-layer ratios are unconstrained. Returns ``(params, snapshot, masks)``.
    """
    if not 0.0 <= target_global_sparsity < 1.0:
        raise ValueError(f"target sparsity must lie in [0, 1), got {target_global_sparsity}")
    seq = np.random.SeedSequence(seed)
    init_seed, mask_seed = seq.spawn(2)
    params, snapshot = init_network(spec, scheme, rescale, seed=int(init_seed.generate_state(1)[0]))
    shapes = spec.weight_shapes()
    total = sum(o * i for o, i in shapes)
    n_alive = round_half_up((1.0 - target_global_sparsity) * total)
    masks = random_global_mask(shapes, n_alive, np.random.default_rng(mask_seed))
    for w, m in zip(params.weights, masks.masks):
        w *= m
    return params, snapshot, masks


def sparsity_stats(masks: MaskSet):
    """Return ``(global_remaining, per_layer_remaining)`` as fractions alive."""
    alive = masks.alive_counts()
    sizes = masks.sizes()
    per_layer = [a / s for a, s in zip(alive, sizes)]
    return sum(alive) / sum(sizes), per_layer


def schedule_alive_counts(total: int, iterations: int, fraction: float = 0.2) -> list:
    """Alive weight counts after 0..iterations prune steps of the default schedule."""
    counts = [total]
    for _ in range(iterations):
        a = counts[-1]
        counts.append(a - round_half_up(fraction * a))
    return counts
