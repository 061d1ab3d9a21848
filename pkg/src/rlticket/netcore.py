"""Dense feed-forward networks with masked linear layers.

Everything is plain numpy in float64. A network is described by a
:class:`NetworkSpec`; its trainable arrays live in a :class:`ParamSet` and
the pruning state in a :class:`MaskSet` (one boolean matrix per weight
matrix, biases are never masked).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NumericError

ACTIVATIONS = ("relu", "tanh")
OUTPUT_HEADS = ("linear", "softmax-logits")
INIT_SCHEMES = ("kaiming-uniform", "xavier-uniform")


@dataclass(frozen=True)
class NetworkSpec:
    layer_sizes: tuple
    activation: str = "relu"
    output_head: str = "linear"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("NetworkSpec needs at least an input and an output size")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.output_head not in OUTPUT_HEADS:
            raise ValueError(f"unknown output head {self.output_head!r}")

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def weight_shapes(self) -> list:
        return [(o, i) for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:])]

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "activation": self.activation,
            "output_head": self.output_head,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(tuple(d["layer_sizes"]), d.get("activation", "relu"), d.get("output_head", "linear"))


@dataclass
class ParamSet:
    """Weights (out x in) and biases (out,) of every linear layer."""

    weights: list
    biases: list

    def __len__(self):
        return len(self.weights)

    def copy(self) -> "ParamSet":
        return ParamSet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def arrays(self) -> list:
        return [*self.weights, *self.biases]

    def zeros_like(self) -> "ParamSet":
        return ParamSet([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def equals(self, other: "ParamSet") -> bool:
        """Bit-exact equality."""
        if len(self) != len(other):
            return False
        return all(a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))

    @staticmethod
    def concat(*parts: "ParamSet") -> "ParamSet":
        return ParamSet([w for p in parts for w in p.weights], [b for p in parts for b in p.biases])

    def split(self, sizes: Sequence[int]) -> list:
        out, start = [], 0
        for n in sizes:
            out.append(ParamSet(self.weights[start:start + n], self.biases[start:start + n]))
            start += n
        return out


@dataclass
class MaskSet:
    """Boolean keep-masks, one per weight matrix (True = alive)."""

    masks: list

    def __len__(self):
        return len(self.masks)

    def __getitem__(self, i):
        return self.masks[i]

    @classmethod
    def ones_like(cls, params: ParamSet) -> "MaskSet":
        return cls([np.ones(w.shape, dtype=bool) for w in params.weights])

    @classmethod
    def ones_for(cls, spec: NetworkSpec) -> "MaskSet":
        return cls([np.ones(s, dtype=bool) for s in spec.weight_shapes()])

    def copy(self) -> "MaskSet":
        return MaskSet([m.copy() for m in self.masks])

    def alive_counts(self) -> list:
        return [int(m.sum()) for m in self.masks]

    def sizes(self) -> list:
        return [int(m.size) for m in self.masks]

    def equals(self, other: "MaskSet") -> bool:
        return len(self) == len(other) and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.masks, other.masks)
        )

    @staticmethod
    def concat(*parts: "MaskSet") -> "MaskSet":
        return MaskSet([m for p in parts for m in p.masks])

    def split(self, sizes: Sequence[int]) -> list:
        out, start = [], 0
        for n in sizes:
            out.append(MaskSet(self.masks[start:start + n]))
            start += n
        return out


@dataclass(frozen=True)
class InitSnapshot:
    """Frozen copy of the parameters right after initialization.

    The arrays are marked read-only so accidental in-place writes fail loudly.
    """

    params: ParamSet
    seed: int

    @classmethod
    def take(cls, params: ParamSet, seed: int) -> "InitSnapshot":
        frozen = params.copy()
        for a in frozen.arrays():
            a.flags.writeable = False
        return cls(frozen, int(seed))


def check_masks(params: ParamSet, masks: MaskSet):
    if len(params) != len(masks):
        raise ValueError(f"{len(masks)} masks for {len(params)} layers")
    for i, (w, m) in enumerate(zip(params.weights, masks.masks)):
        if w.shape != m.shape:
            raise ValueError(f"layer {i}: mask shape {m.shape} != weight shape {w.shape}")


def init_network(spec: NetworkSpec, scheme: str = "kaiming-uniform", input_layer_rescale: float = 1.0,
                 seed: int = 0):
    """Sample fresh parameters.

    Kaiming-uniform draws from U(-b, b) with b = sqrt(6 / fan_in), Xavier-uniform
    with b = sqrt(6 / (fan_in + fan_out)). The first layer's weights are then
    divided by ``input_layer_rescale``. Biases start at zero.

    Returns ``(params, snapshot)``.
    """
    if not input_layer_rescale > 0:
        raise ValueError(f"input_layer_rescale must be positive, got {input_layer_rescale}")
    if scheme not in INIT_SCHEMES:
        raise ValueError(f"unknown init scheme {scheme!r}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for k, (fan_out, fan_in) in enumerate(spec.weight_shapes()):
        bound = init_bound(scheme, fan_in, fan_out)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        if k == 0:
            w = w / input_layer_rescale
        weights.append(w)
        biases.append(np.zeros(fan_out))
    params = ParamSet(weights, biases)
    return params, InitSnapshot.take(params, seed)


def init_bound(scheme: str, fan_in: int, fan_out: int) -> float:
    if scheme == "kaiming-uniform":
        return math.sqrt(6.0 / fan_in)
    if scheme == "xavier-uniform":
        return math.sqrt(6.0 / (fan_in + fan_out))
    raise ValueError(f"unknown init scheme {scheme!r}")


def _act(z, activation):
    if activation == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _effective(params: ParamSet, masks: Optional[MaskSet]):
    if masks is None:
        return params.weights
    check_masks(params, masks)
    return [w * m for w, m in zip(params.weights, masks.masks)]


def forward(params: ParamSet, masks: Optional[MaskSet], x, activation: str = "relu"):
    """Evaluate the network on one input vector or a batch (rows).

    ``masks=None`` means dense. The output layer is linear; softmax heads are
    handled by the losses.
    """
    x = np.asarray(x, dtype=np.float64)
    weights = _effective(params, masks)
    if x.shape[-1] != weights[0].shape[1]:
        raise ValueError(f"input has {x.shape[-1]} features, network expects {weights[0].shape[1]}")
    h = x
    last = len(weights) - 1
    for k, (w, b) in enumerate(zip(weights, params.biases)):
        h = h @ w.T + b
        if k < last:
            h = _act(h, activation)
    if not np.all(np.isfinite(h)):
        raise NumericError("non-finite network output", layer=last)
    return h


LossFn = Callable[[np.ndarray], tuple]


def loss_and_grad(params: ParamSet, masks: Optional[MaskSet], x, loss_fn: LossFn, activation: str = "relu"):
    """Reverse-mode gradient of ``loss_fn(outputs)`` w.r.t. all parameters.

    ``loss_fn`` maps the (batch, out) output matrix to ``(loss, d_loss/d_outputs)``.
    Gradients at masked weight positions are exactly zero.

    Returns ``(loss, outputs, grads)`` where ``grads`` is a :class:`ParamSet`.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    weights = _effective(params, masks)
    if x.shape[1] != weights[0].shape[1]:
        raise ValueError(f"input has {x.shape[1]} features, network expects {weights[0].shape[1]}")
    last = len(weights) - 1
    acts = [x]
    h = x
    for k, (w, b) in enumerate(zip(weights, params.biases)):
        h = h @ w.T + b
        if k < last:
            h = _act(h, activation)
        acts.append(h)
    out = acts[-1]
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite network output", layer=last)
    loss, dz = loss_fn(out)
    dz = np.asarray(dz, dtype=np.float64)
    gw, gb = [None] * len(weights), [None] * len(weights)
    for k in range(last, -1, -1):
        if k < last:
            a = acts[k + 1]
            if activation == "relu":
                dz = dz * (a > 0)
            else:
                dz = dz * (1.0 - a * a)
        g = dz.T @ acts[k]
        if masks is not None:
            g = g * masks.masks[k]
        gw[k] = g
        gb[k] = dz.sum(axis=0)
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(gb[k]))):
            raise NumericError(f"non-finite gradient in layer {k}", layer=k)
        if k > 0:
            dz = dz @ weights[k]
    return float(loss), out, ParamSet(gw, gb)


def grad(params: ParamSet, masks: Optional[MaskSet], x, loss_fn: LossFn, activation: str = "relu") -> ParamSet:
    return loss_and_grad(params, masks, x, loss_fn, activation)[2]


def global_norm(grads: ParamSet) -> float:
    return math.sqrt(sum(float(np.sum(a * a)) for a in grads.arrays()))


def clip_grad_norm(grads: ParamSet, max_norm: float) -> float:
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for a in grads.arrays():
            a *= scale
    return norm


@dataclass
class AdamState:
    lr: float
    m: ParamSet
    v: ParamSet
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def fresh(cls, params: ParamSet, lr: float, **kw) -> "AdamState":
        return cls(lr=lr, m=params.zeros_like(), v=params.zeros_like(), **kw)


def adam_step(state: AdamState, params: ParamSet, grads: ParamSet, masks: Optional[MaskSet] = None) -> ParamSet:
    """One bias-corrected Adam update, applied to ``params`` in place.

    The mask is re-applied after the update so pruned weights stay at zero.
    """
    if len(grads) != len(params):
        raise ValueError("gradient set does not match parameter set")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    step_size = state.lr / c1
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m.arrays(), state.v.arrays()):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= step_size * m / (np.sqrt(v / c2) + state.eps)
    if masks is not None:
        for w, mk in zip(params.weights, masks.masks):
            w *= mk
    return params


def apply_masks(params: ParamSet, masks: MaskSet) -> ParamSet:
    """Zero masked weights in place."""
    check_masks(params, masks)
    for w, m in zip(params.weights, masks.masks):
        w *= m
    return params

