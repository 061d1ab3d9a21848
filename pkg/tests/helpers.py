"""Contract checks shared by the harness and acceptance tests."""

import numpy as np

from rlticket.netcore import MaskSet, forward
from rlticket.pruning import round_half_up


def _multisets(weights, masks):
    return [np.sort(w[m]) for w, m in zip(weights, masks)]


def contract_violations(condition, art, prune_fraction=0.2):
    """Return a list of human-readable violations for one iteration boundary."""
    bad = []
    if art.next_params is None:
        return bad
    i = art.prunable[0]
    new_m = art.next_masks[i].masks
    new_w = art.next_params[i].weights
    target = art.rewind_target[i].weights
    old_alive = sum(art.masks[i].alive_counts())
    if condition == "random_reinit":
        expected = old_alive - round_half_up(prune_fraction * old_alive)
        if sum(art.next_masks[i].alive_counts()) != expected:
            bad.append("random_reinit global alive count")
        return bad
    pruned = art.pruned_masks.masks
    if condition in ("mask_weights", "mask_permuted"):
        if not all(np.array_equal(a, b) for a, b in zip(new_m, pruned)):
            bad.append(f"{condition}: mask differs from prune output")
        if any(np.any(a & ~b) for a, b in zip(new_m, art.masks[i].masks)):
            bad.append(f"{condition}: a pruned weight revived")
    if condition == "mask_weights":
        for w, t, m in zip(new_w, target, new_m):
            if not np.array_equal(w[m], t[m]):
                bad.append("mask_weights: alive value differs from snapshot")
    if condition in ("mask_permuted", "permuted_permuted"):
        for a, b in zip(_multisets(new_w, new_m), _multisets(target, pruned)):
            if not np.array_equal(a, b):
                bad.append(f"{condition}: per-layer value multiset changed")
    if condition == "permuted_permuted":
        if [int(m.sum()) for m in new_m] != [int(m.sum()) for m in pruned]:
            bad.append("permuted_permuted: per-layer alive counts changed")
    for w, m in zip(new_w, new_m):
        if np.any(w[~m] != 0):
            bad.append(f"{condition}: masked weight nonzero")
    return bad


def squared_error(target):
    def fn(out):
        diff = out - target
        return 0.5 * float(np.sum(diff * diff)), diff
    return fn


def random_masks(spec, rng, keep=0.6):
    return MaskSet([rng.random(s) < keep for s in spec.weight_shapes()])


def finite_difference(params, masks, x, loss_fn, activation, h=1e-5):
    """Central differences over every weight and bias entry."""
    out = params.zeros_like()
    for p, g in zip(params.arrays(), out.arrays()):
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = p[i]
            p[i] = orig + h
            lp = loss_fn(forward(params, masks, x, activation))[0]
            p[i] = orig - h
            lm = loss_fn(forward(params, masks, x, activation))[0]
            p[i] = orig
            g[i] = (lp - lm) / (2 * h)
    return out
