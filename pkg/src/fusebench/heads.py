"""Classification heads: plain MLP and gated MLP, forward and backward.

Both head kinds are stacks of linear layers.  The MLP applies
activation + dropout after every hidden linear; the gated variant
additionally splits each activated hidden block into channel halves
Z1 | Z2 and gates them as s = Z1 * (Z2 @ Wg^T + bg), so the block's
output width is half its hidden width.  The final linear emits raw
logits; the sigmoid lives with the losses and metrics.

Forward and backward are dtype-generic: float32 parameters (the
production path) keep float32 activations with float64 accumulation in
every matmul, while float64 parameters run entirely in float64, which
is what the finite-difference gradient checks use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .linalg import Rng, ShapeError, matmul, reduce_sum, transpose

__all__ = [
    "ACTIVATIONS",
    "HEAD_KINDS",
    "HeadSpec",
    "LinearLayer",
    "HeadParams",
    "ForwardCache",
    "linear_forward",
    "activate",
    "dropout_forward",
    "head_forward",
    "head_backward",
    "param_init",
]

HEAD_KINDS = ("mlp", "gmlp")
ACTIVATIONS = ("gelu", "relu", "leaky_relu")
LEAKY_SLOPE = 0.01
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class HeadSpec:
    """Architecture of one head: layer widths, activation, dropout."""

    kind: str
    layer_dims: tuple[int, ...]
    activation: str = "gelu"
    dropout_rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        if self.kind not in HEAD_KINDS:
            raise ValueError(f"unknown head kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.layer_dims) < 2:
            raise ValueError("layer_dims needs at least an input and an output width")
        if any(d < 1 for d in self.layer_dims):
            raise ValueError(f"layer widths must be >= 1, got {self.layer_dims}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.kind == "gmlp":
            for d in self.layer_dims[1:-1]:
                if d % 2 != 0:
                    raise ValueError(f"gmlp hidden widths must be even, got {d}")

    @property
    def num_hidden(self) -> int:
        return len(self.layer_dims) - 2

    def linear_in_dims(self) -> list[int]:
        """Input width of each linear layer, accounting for the gate split."""
        dims = [self.layer_dims[0]]
        for d in self.layer_dims[1:-1]:
            dims.append(d // 2 if self.kind == "gmlp" else d)
        return dims


@dataclass
class LinearLayer:
    """Affine map x -> x @ weight^T + bias, weight shaped (d_out, d_in)."""

    weight: np.ndarray
    bias: np.ndarray


@dataclass
class HeadParams:
    """All trainable arrays of one head, in declaration order.

    Declaration order (used by the optimizer and the model file) is:
    per hidden block its linear weight and bias, then for gated heads
    the block's gate weight and bias; finally the output weight and bias.
    """

    spec: HeadSpec
    layers: list[LinearLayer]
    gates: list[LinearLayer] = field(default_factory=list)

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i in range(self.spec.num_hidden):
            out.append((f"layer{i}.weight", self.layers[i].weight))
            out.append((f"layer{i}.bias", self.layers[i].bias))
            if self.spec.kind == "gmlp":
                out.append((f"gate{i}.weight", self.gates[i].weight))
                out.append((f"gate{i}.bias", self.gates[i].bias))
        out.append(("out.weight", self.layers[-1].weight))
        out.append(("out.bias", self.layers[-1].bias))
        return out

    def arrays(self) -> list[np.ndarray]:
        return [a for _, a in self.named_arrays()]

    def astype(self, dtype) -> "HeadParams":
        layers = [LinearLayer(l.weight.astype(dtype), l.bias.astype(dtype)) for l in self.layers]
        gates = [LinearLayer(g.weight.astype(dtype), g.bias.astype(dtype)) for g in self.gates]
        return HeadParams(self.spec, layers, gates)

    def copy(self) -> "HeadParams":
        return self.astype(self.layers[0].weight.dtype)

    def replace_arrays(self, arrays: list[np.ndarray]) -> "HeadParams":
        """Rebuild a HeadParams from flat arrays in declaration order."""
        expected = self.arrays()
        if len(arrays) != len(expected):
            raise ValueError(f"expected {len(expected)} arrays, got {len(arrays)}")
        it = iter(arrays)
        layers, gates = [], []
        for i in range(self.spec.num_hidden):
            layers.append(LinearLayer(next(it), next(it)))
            if self.spec.kind == "gmlp":
                gates.append(LinearLayer(next(it), next(it)))
        layers.append(LinearLayer(next(it), next(it)))
        return HeadParams(self.spec, layers, gates)


@dataclass
class ForwardCache:
    """Intermediates saved by head_forward for the backward pass."""

    spec: HeadSpec
    mode: str
    inputs: list[np.ndarray] = field(default_factory=list)   # input of each linear
    preacts: list[np.ndarray] = field(default_factory=list)  # pre-activation per hidden
    halves: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)  # (Z1, Z2)
    gate_inputs: list[np.ndarray] = field(default_factory=list)  # Z2 into the gate linear
    gate_outputs: list[np.ndarray] = field(default_factory=list)  # f(Z2)
    masks: list[np.ndarray] = field(default_factory=list)     # multiplicative dropout masks


def linear_forward(layer: LinearLayer, x) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != layer.weight.shape[1]:
        raise ShapeError(
            f"linear layer expects input width {layer.weight.shape[1]}, got shape {x.shape}"
        )
    return matmul(x, transpose(layer.weight)) + layer.bias


def activate(x, kind: str, mode: str = "forward") -> np.ndarray:
    """Pointwise activation or its derivative, preserving dtype.

    GeLU uses the exact Gaussian CDF (no tanh approximation); its
    derivative is Phi(x) + x * phi(x).  ReLU's derivative at 0 is taken
    as 0, leaky ReLU's as the negative slope.
    """
    x = np.asarray(x)
    if kind == "gelu":
        cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
        if mode == "forward":
            return x * cdf
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
        return cdf + x * pdf
    if kind == "relu":
        if mode == "forward":
            return np.maximum(x, 0)
        return np.where(x > 0, 1.0, 0.0).astype(x.dtype)
    if kind == "leaky_relu":
        if mode == "forward":
            return np.where(x > 0, x, LEAKY_SLOPE * x).astype(x.dtype)
        return np.where(x > 0, 1.0, LEAKY_SLOPE).astype(x.dtype)
    raise ValueError(f"unknown activation {kind!r}")


def dropout_forward(x, rate: float, mode: str, rng: Rng | None = None):
    """Inverted dropout.

    Returns (output, mask) where the mask is multiplicative: kept entries
    hold 1/(1-rate), dropped entries 0, and output == x * mask.  Eval
    mode (or rate 0) is the identity with an all-ones mask and consumes
    no randomness.
    """
    x = np.asarray(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown dropout mode {mode!r}")
    if mode == "eval" or rate == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise ValueError("train-mode dropout with rate > 0 needs an rng")
    keep = rng.uniform(x.shape[0], x.shape[1]) >= rate
    mask = (keep / (1.0 - rate)).astype(x.dtype)
    return x * mask, mask


def head_forward(spec: HeadSpec, params: HeadParams, x, mode: str = "eval",
                 rng: Rng | None = None):
    """Run the head; returns (logits, cache) with cache ready for backward."""
    x = np.asarray(x)
    if params.spec != spec:
        raise ValueError("params were built for a different head spec")
    if x.ndim != 2 or x.shape[1] != spec.layer_dims[0]:
        raise ShapeError(f"head expects input width {spec.layer_dims[0]}, got shape {x.shape}")
    cache = ForwardCache(spec=spec, mode=mode)
    h = x
    for i in range(spec.num_hidden):
        cache.inputs.append(h)
        z = linear_forward(params.layers[i], h)
        cache.preacts.append(z)
        a = activate(z, spec.activation, "forward")
        if spec.kind == "gmlp":
            half = a.shape[1] // 2
            z1, z2 = a[:, :half], a[:, half:]
            g = linear_forward(params.gates[i], z2)
            cache.halves.append((z1, z2))
            cache.gate_inputs.append(z2)
            cache.gate_outputs.append(g)
            a = z1 * g
        h, mask = dropout_forward(a, spec.dropout_rate, mode, rng)
        cache.masks.append(mask)
    cache.inputs.append(h)
    logits = linear_forward(params.layers[-1], h)
    return logits, cache


def _linear_backward(layer: LinearLayer, x, dy):
    dw = matmul(transpose(dy), x)
    db = reduce_sum(dy, axis=0)
    dx = matmul(dy, layer.weight)
    return dw, db, dx


def head_backward(spec: HeadSpec, params: HeadParams, cache: ForwardCache, dlogits):
    """Exact reverse-mode gradients.

    Returns (grads, dinput) where grads is a list of arrays parallel to
    ``params.arrays()`` (declaration order).
    """
    if cache.spec != spec or params.spec != spec:
        raise ValueError("cache/params do not match the head spec")
    dlogits = np.asarray(dlogits)
    if dlogits.shape[1] != spec.layer_dims[-1]:
        raise ShapeError(f"dlogits width {dlogits.shape[1]} != output width {spec.layer_dims[-1]}")

    grads: dict[str, np.ndarray] = {}
    dw, db, dh = _linear_backward(params.layers[-1], cache.inputs[-1], dlogits)
    grads["out.weight"], grads["out.bias"] = dw, db

    for i in reversed(range(spec.num_hidden)):
        da = dh * cache.masks[i]
        if spec.kind == "gmlp":
            z1, _ = cache.halves[i]
            g = cache.gate_outputs[i]
            dz1 = da * g
            dg = da * z1
            dwg, dbg, dz2 = _linear_backward(params.gates[i], cache.gate_inputs[i], dg)
            grads[f"gate{i}.weight"], grads[f"gate{i}.bias"] = dwg, dbg
            da = np.hstack([dz1, dz2])
        dz = da * activate(cache.preacts[i], spec.activation, "derivative")
        dw, db, dh = _linear_backward(params.layers[i], cache.inputs[i], dz)
        grads[f"layer{i}.weight"], grads[f"layer{i}.bias"] = dw, db

    ordered = [grads[name] for name, _ in params.named_arrays()]
    return ordered, dh


def param_init(spec: HeadSpec, rng: Rng) -> HeadParams:
    """He-style init: weights ~ N(0, 2/fan_in), biases exactly zero."""
    in_dims = spec.linear_in_dims()
    out_dims = list(spec.layer_dims[1:])
    layers, gates = [], []
    for i, (d_in, d_out) in enumerate(zip(in_dims, out_dims)):
        std = float(np.sqrt(2.0 / d_in))
        w = rng.normal(d_out, d_in, 0.0, std)
        layers.append(LinearLayer(w, np.zeros(d_out, dtype=w.dtype)))
        if spec.kind == "gmlp" and i < spec.num_hidden:
            half = d_out // 2
            gstd = float(np.sqrt(2.0 / half))
            gw = rng.normal(half, half, 0.0, gstd)
            gates.append(LinearLayer(gw, np.zeros(half, dtype=gw.dtype)))
    return HeadParams(spec, layers, gates)
