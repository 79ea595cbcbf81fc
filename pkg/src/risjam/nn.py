"""Minimal dense-network substrate: forward, exact backprop, Adam, Polyak.

Everything is float64 numpy (float32 available via `dtype`). Layer
activations are "relu", "sigmoid_scaled" (sigmoid times `sigmoid_scale`,
used to bound an output head to (0, scale)), or "identity".

Parameter files: magic b"RJNN", an 8-byte little-endian header length,
a UTF-8 JSON header {"format", "sizes", "activations", "sigmoid_scale",
"dtype"}, then the raw parameter floats little-endian in layer order
W0, b0, W1, b1, ... with each W row-major (out_dim, in_dim).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DenseNet",
    "GradientSet",
    "AdamState",
    "init_dense_net",
    "forward",
    "backward",
    "optimizer_step",
    "polyak_blend",
    "save_net",
    "load_net",
    "NonFiniteGradientError",
]

_ACTIVATIONS = ("relu", "sigmoid_scaled", "identity")
_MAGIC = b"RJNN"


class NonFiniteGradientError(ValueError):
    """Raised when an update is fed NaN/inf gradients."""


@dataclass
class DenseNet:
    sizes: tuple                     # (in, hidden..., out)
    weights: list                    # W[i]: (sizes[i+1], sizes[i])
    biases: list                     # b[i]: (sizes[i+1],)
    activations: tuple               # one tag per layer
    sigmoid_scale: float = 1.0

    def __post_init__(self):
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("layer count mismatch")
        if len(self.activations) != len(self.weights):
            raise ValueError("one activation tag per layer required")
        for act in self.activations:
            if act not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[i + 1], self.sizes[i]) or b.shape != (self.sizes[i + 1],):
                raise ValueError(f"parameter shape mismatch at layer {i}")

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def copy(self) -> "DenseNet":
        return DenseNet(sizes=self.sizes, weights=[w.copy() for w in self.weights],
                        biases=[b.copy() for b in self.biases],
                        activations=self.activations, sigmoid_scale=self.sigmoid_scale)


@dataclass
class GradientSet:
    d_weights: list
    d_biases: list
    d_input: np.ndarray

    def is_finite(self) -> bool:
        return (all(np.all(np.isfinite(g)) for g in self.d_weights)
                and all(np.all(np.isfinite(g)) for g in self.d_biases))


@dataclass
class AdamState:
    """First/second-moment accumulators for one DenseNet."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m_weights: list = field(default_factory=list)
    v_weights: list = field(default_factory=list)
    m_biases: list = field(default_factory=list)
    v_biases: list = field(default_factory=list)

    @classmethod
    def for_net(cls, net: DenseNet, learning_rate: float) -> "AdamState":
        st = cls(learning_rate=learning_rate)
        st.m_weights = [np.zeros_like(w) for w in net.weights]
        st.v_weights = [np.zeros_like(w) for w in net.weights]
        st.m_biases = [np.zeros_like(b) for b in net.biases]
        st.v_biases = [np.zeros_like(b) for b in net.biases]
        return st


def init_dense_net(sizes, activations, rng: np.random.Generator,
                   sigmoid_scale: float = 1.0, dtype=np.float64) -> DenseNet:
    """Uniform +-1/sqrt(fan_in) init per layer, seeded by the generator."""
    sizes = tuple(int(s) for s in sizes)
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        bound = 1.0 / math.sqrt(sizes[i])
        weights.append(rng.uniform(-bound, bound, size=(sizes[i + 1], sizes[i])).astype(dtype))
        biases.append(rng.uniform(-bound, bound, size=sizes[i + 1]).astype(dtype))
    return DenseNet(sizes=sizes, weights=weights, biases=biases,
                    activations=tuple(activations), sigmoid_scale=sigmoid_scale)


def _apply_activation(z, act, scale):
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "sigmoid_scaled":
        return scale / (1.0 + np.exp(-z))
    return z


def _activation_grad(z, a, act, scale):
    # derivative w.r.t. pre-activation, expressed via z and the output a
    if act == "relu":
        return (z > 0).astype(z.dtype)
    if act == "sigmoid_scaled":
        s = a / scale
        return scale * s * (1.0 - s)
    return np.ones_like(z)


def _forward_cached(net: DenseNet, x: np.ndarray):
    """Returns (output, [(input, pre-activation, output) per layer]).

    Accepts a single vector or a (batch, in_dim) matrix.
    """
    a = np.asarray(x, dtype=net.weights[0].dtype)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    if a.shape[1] != net.in_dim:
        raise ValueError(f"input dim {a.shape[1]} != {net.in_dim}")
    caches = []
    for w, b, act in zip(net.weights, net.biases, net.activations):
        z = a @ w.T + b
        out = _apply_activation(z, act, net.sigmoid_scale)
        caches.append((a, z, out))
        a = out
    return (a[0] if single else a), caches, single


def forward(net: DenseNet, x: np.ndarray) -> np.ndarray:
    """Affine + activation composition; batched when x is 2-D."""
    return _forward_cached(net, x)[0]


def backward(net: DenseNet, x: np.ndarray, upstream: np.ndarray) -> GradientSet:
    """Exact reverse-mode gradients of sum(output * upstream).

    Gradients cover every weight, every bias, and the input itself.
    Batched inputs sum gradients over the batch rows (the caller scales
    upstream for means).
    """
    _, caches, single = _forward_cached(net, x)
    g = np.asarray(upstream, dtype=net.weights[0].dtype)
    if single:
        g = g[None, :]
    if g.shape != caches[-1][2].shape:
        raise ValueError("upstream gradient shape mismatch")
    d_weights = [None] * len(net.weights)
    d_biases = [None] * len(net.biases)
    for i in range(len(net.weights) - 1, -1, -1):
        a_in, z, a_out = caches[i]
        gz = g * _activation_grad(z, a_out, net.activations[i], net.sigmoid_scale)
        d_weights[i] = gz.T @ a_in
        d_biases[i] = gz.sum(axis=0)
        g = gz @ net.weights[i]
    d_input = g[0] if single else g
    return GradientSet(d_weights=d_weights, d_biases=d_biases, d_input=d_input)


def optimizer_step(net: DenseNet, grads: GradientSet, opt: AdamState) -> None:
    """One Adam descent step in place (callers negate grads to ascend)."""
    if not grads.is_finite():
        raise NonFiniteGradientError("refusing to apply non-finite gradients")
    opt.step_count += 1
    t = opt.step_count
    corr1 = 1.0 - opt.beta1 ** t
    corr2 = 1.0 - opt.beta2 ** t
    for params, gs, ms, vs in ((net.weights, grads.d_weights, opt.m_weights, opt.v_weights),
                               (net.biases, grads.d_biases, opt.m_biases, opt.v_biases)):
        for p, g, m, v in zip(params, gs, ms, vs):
            m *= opt.beta1
            m += (1.0 - opt.beta1) * g
            v *= opt.beta2
            v += (1.0 - opt.beta2) * np.square(g)
            p -= opt.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + opt.eps)


def polyak_blend(target: DenseNet, online: DenseNet, rho: float) -> DenseNet:
    """theta' <- rho * theta + (1 - rho) * theta', in place on target."""
    if target.sizes != online.sizes or target.activations != online.activations:
        raise ValueError("architecture mismatch")
    for tw, ow in zip(target.weights, online.weights):
        tw *= (1.0 - rho)
        tw += rho * ow
    for tb, ob in zip(target.biases, online.biases):
        tb *= (1.0 - rho)
        tb += rho * ob
    return target


def save_net(net: DenseNet, path) -> None:
    header = json.dumps({
        "format": "densenet-v1",
        "sizes": list(net.sizes),
        "activations": list(net.activations),
        "sigmoid_scale": net.sigmoid_scale,
        "dtype": "float64",   # parameters are widened to f8 on disk
    }).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for w, b in zip(net.weights, net.biases):
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_net(path) -> DenseNet:
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise ValueError("not a dense-net parameter file")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode("utf-8"))
        if header.get("format") != "densenet-v1":
            raise ValueError("unsupported parameter format")
        sizes = tuple(header["sizes"])
        weights, biases = [], []
        for i in range(len(sizes) - 1):
            n = sizes[i + 1] * sizes[i]
            weights.append(np.frombuffer(f.read(8 * n), dtype="<f8")
                           .reshape(sizes[i + 1], sizes[i]).copy())
            biases.append(np.frombuffer(f.read(8 * sizes[i + 1]), dtype="<f8").copy())
    return DenseNet(sizes=sizes, weights=weights, biases=biases,
                    activations=tuple(header["activations"]),
                    sigmoid_scale=float(header["sigmoid_scale"]))
