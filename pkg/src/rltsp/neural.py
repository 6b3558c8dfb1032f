"""Small dense ReLU networks with hand-written backprop and RMSProp.

Weights are stored fan-in x fan-out so a batch of row vectors propagates as
``x @ W + b``. The output head is either a softmax distribution or a single
linear scalar.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .exceptions import NumericError, ParameterError, ShapeError

SOFTMAX = "softmax"
LINEAR = "linear"
HEADS = (SOFTMAX, LINEAR)
CHECKPOINT_VERSION = 1
PROB_FLOOR = 1e-12


@dataclass
class DenseNet:
    layer_widths: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head: str = LINEAR

    def __post_init__(self):
        self.layer_widths = [int(w) for w in self.layer_widths]
        if len(self.layer_widths) < 2 or min(self.layer_widths) < 1:
            raise ParameterError(f"invalid layer widths {self.layer_widths}")
        if self.head not in HEADS:
            raise ParameterError(f"unknown head {self.head!r}")
        if self.head == SOFTMAX and self.layer_widths[-1] < 2:
            raise ParameterError("softmax head needs at least 2 outputs")
        if self.head == LINEAR and self.layer_widths[-1] != 1:
            raise ParameterError("linear head must have exactly 1 output")
        if len(self.weights) != len(self.layer_widths) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError("parameter count does not match layer widths")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_widths[k], self.layer_widths[k + 1])
            if w.shape != shape or b.shape != (shape[1],):
                raise ShapeError(f"layer {k}: expected {shape}, got {w.shape} / {b.shape}")

    @property
    def params(self) -> list[np.ndarray]:
        """Flat list ``[W0, b0, W1, b1, ...]``; arrays are shared, not copied."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "DenseNet":
        return DenseNet(
            list(self.layer_widths),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.head,
        )


@dataclass
class ForwardTrace:
    activations: list[np.ndarray]  # input, then every layer output after its nonlinearity
    preacts: list[np.ndarray]

    @property
    def batch_size(self) -> int:
        return self.activations[0].shape[0]


@dataclass
class OptimizerState:
    """RMSProp running averages of squared gradients, one per parameter array."""

    accumulators: list[np.ndarray]
    learning_rate: float
    decay: float = 0.96
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ParameterError("learning rate must be positive")
        if not 0 < self.decay < 1:
            raise ParameterError("decay must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ParameterError("epsilon must be positive")

    @classmethod
    def for_net(cls, net: DenseNet, learning_rate, decay=0.96, epsilon=1e-6):
        return cls([np.zeros_like(p) for p in net.params], learning_rate, decay, epsilon)


def init_net(layer_widths, head=LINEAR, seed=None) -> DenseNet:
    """Glorot-uniform weights, zero biases."""
    widths = [int(w) for w in layer_widths]
    if len(widths) < 2:
        raise ParameterError("an architecture needs at least input and output widths")
    if min(widths) < 1:
        raise ParameterError(f"invalid layer widths {widths}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return DenseNet(widths, weights, biases, head)


def zeros_net(layer_widths, head=LINEAR) -> DenseNet:
    widths = [int(w) for w in layer_widths]
    return DenseNet(
        widths,
        [np.zeros((a, b)) for a, b in zip(widths[:-1], widths[1:])],
        [np.zeros(b) for b in widths[1:]],
        head,
    )


def softmax(z: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax, floored at ``PROB_FLOOR`` so no entry is exactly zero."""
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    if p.min() < PROB_FLOOR:
        p = np.maximum(p, PROB_FLOOR)
        p /= p.sum(axis=-1, keepdims=True)
    return p


def forward(net: DenseNet, batch) -> tuple[np.ndarray, ForwardTrace]:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.layer_widths[0]:
        raise ShapeError(f"expected rows of width {net.layer_widths[0]}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite network input")
    acts, pre = [x], []
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = acts[-1] @ w + b
        pre.append(z)
        if k < last:
            acts.append(np.maximum(z, 0.0))
        elif net.head == SOFTMAX:
            acts.append(softmax(z))
        else:
            acts.append(z)
    out = acts[-1]
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite network output")
    return out, ForwardTrace(acts, pre)


def backward(net: DenseNet, trace: ForwardTrace, output_grad) -> list[np.ndarray]:
    """Gradients ``[dW0, db0, ...]`` of the scalar loss whose output gradient is given.

    ``output_grad`` is dLoss/dOutput for the head's outputs (probabilities
    for softmax, the raw scalar for linear), already carrying any batch
    averaging the caller wants.
    """
    g = np.asarray(output_grad, dtype=np.float64)
    out = trace.activations[-1]
    if g.shape != out.shape:
        raise ShapeError(f"output_grad shape {g.shape} != output shape {out.shape}")
    if net.head == SOFTMAX:
        g = out * (g - np.sum(g * out, axis=1, keepdims=True))
    grads = [None] * (2 * len(net.weights))
    for k in range(len(net.weights) - 1, -1, -1):
        grads[2 * k] = trace.activations[k].T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        if k > 0:
            g = (g @ net.weights[k].T) * (trace.preacts[k - 1] > 0)
    return grads


def rmsprop_step(state: OptimizerState, params, grads):
    """In-place RMSProp update of ``params``; returns ``(params, state)``."""
    if len(params) != len(grads) or len(params) != len(state.accumulators):
        raise ShapeError("params, grads and accumulators differ in length")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient")
    rho, lr, eps = state.decay, state.learning_rate, state.epsilon
    for p, g, a in zip(params, grads, state.accumulators):
        if p.shape != g.shape or p.shape != a.shape:
            raise ShapeError(f"shape mismatch {p.shape} / {g.shape} / {a.shape}")
        a *= rho
        a += (1.0 - rho) * g * g
        p -= lr * g / np.sqrt(a + eps)
    return params, state


# -- checkpoints ------------------------------------------------------------


def net_to_dict(net: DenseNet) -> dict:
    return {
        "format": "rltsp-densenet",
        "version": CHECKPOINT_VERSION,
        "layer_widths": net.layer_widths,
        "head": net.head,
        "weights": [w.ravel().tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def net_from_dict(data: dict) -> DenseNet:
    if data.get("format") != "rltsp-densenet":
        raise ValueError("not a DenseNet checkpoint")
    if data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data.get('version')}")
    widths = data["layer_widths"]
    weights = [
        np.array(w, dtype=np.float64).reshape(a, b)
        for w, a, b in zip(data["weights"], widths[:-1], widths[1:])
    ]
    biases = [np.array(b, dtype=np.float64) for b in data["biases"]]
    return DenseNet(widths, weights, biases, data["head"])


def save_net(net: DenseNet, path):
    with open(path, "w") as fh:
        json.dump(net_to_dict(net), fh)


def load_net(path) -> DenseNet:
    with open(path) as fh:
        return net_from_dict(json.load(fh))
