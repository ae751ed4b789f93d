"""Fully connected approximator with a bias-free linear output neuron."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .linmodel import LinearModel

ACTIVATIONS = {"identity": kernels.ACT_IDENTITY, "tanh": kernels.ACT_TANH, "relu": kernels.ACT_RELU}


@dataclass
class Network:
    """``W_L act(W_{L-1} ... act(W_0 x + b_0) ... + b_{L-1})``.

    ``weights[i]`` has shape ``(out, in)``; there is one bias per hidden layer
    and none on the output layer, which has a single row.
    """

    weights: list
    biases: list
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.weights = [np.array(W, dtype=float, ndmin=2) for W in self.weights]
        self.biases = [np.array(b, dtype=float).ravel() for b in self.biases]
        if not self.weights:
            raise ValueError("network needs at least one layer")
        if len(self.biases) != len(self.weights) - 1:
            raise ValueError("need exactly one bias per hidden layer (no output bias)")
        if self.weights[-1].shape[0] != 1:
            raise ValueError("output layer must have a single row")
        for i in range(1, len(self.weights)):
            if self.weights[i].shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i} input width does not match layer {i - 1} output width")
        for i, b in enumerate(self.biases):
            if b.shape[0] != self.weights[i].shape[0]:
                raise ValueError(f"bias {i} has wrong length")

    @property
    def sizes(self) -> np.ndarray:
        return np.array([self.weights[0].shape[1]] + [W.shape[0] for W in self.weights], dtype=np.int64)

    @property
    def input_width(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_params(self) -> int:
        return sum(W.size for W in self.weights) + sum(b.size for b in self.biases)

    def flatten(self) -> np.ndarray:
        parts = []
        for i, W in enumerate(self.weights):
            parts.append(W.ravel())
            if i < len(self.biases):
                parts.append(self.biases[i])
        return np.concatenate(parts)

    def with_params(self, flat) -> "Network":
        flat = np.asarray(flat, dtype=float)
        if flat.shape[0] != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape[0]}")
        weights, biases = [], []
        p = 0
        for i, W in enumerate(self.weights):
            weights.append(flat[p:p + W.size].reshape(W.shape).copy())
            p += W.size
            if i < len(self.biases):
                n = self.biases[i].size
                biases.append(flat[p:p + n].copy())
                p += n
        return Network(weights, biases, self.activation)

    def copy(self) -> "Network":
        return self.with_params(self.flatten())

    def forward(self, X) -> np.ndarray:
        return forward(self, X)

    def to_dict(self):
        return {
            "activation": self.activation,
            "shapes": [list(W.shape) for W in self.weights],
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d) -> "Network":
        return cls(d["weights"], d["biases"], d["activation"])


@dataclass
class GradientSet:
    weights: list
    biases: list

    def flatten(self) -> np.ndarray:
        parts = []
        for i, W in enumerate(self.weights):
            parts.append(np.ravel(W))
            if i < len(self.biases):
                parts.append(self.biases[i])
        return np.concatenate(parts)


def _check_inputs(net: Network, X):
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.input_width:
        raise ValueError(f"expected inputs of shape (N, {net.input_width}), got {X.shape}")
    return X


def forward(net: Network, X) -> np.ndarray:
    """Row-wise network output for stacked inputs ``X`` of shape (N, n_in)."""
    X = _check_inputs(net, X)
    return kernels.mlp_forward(net.flatten(), net.sizes, ACTIVATIONS[net.activation], X)


def forward_and_vjp(net: Network, X, cotangent):
    """Network output and the flat gradient of ``<cotangent, output>``."""
    X = _check_inputs(net, X)
    cot = np.ascontiguousarray(cotangent, dtype=float)
    if cot.shape != (X.shape[0],):
        raise ValueError(f"cotangent must have shape ({X.shape[0]},), got {cot.shape}")
    return kernels.mlp_vjp(net.flatten(), net.sizes, ACTIVATIONS[net.activation], X, cot)


def backward(net: Network, X, cotangent) -> GradientSet:
    _, flat = forward_and_vjp(net, X, cotangent)
    g = net.with_params(flat)
    return GradientSet(g.weights, g.biases)


def init_network(layer_sizes, activation: str = "tanh", rng=None) -> Network:
    """Glorot-uniform weights and zero biases; ``layer_sizes`` runs input to output."""
    rng = np.random.default_rng(rng)
    sizes = list(layer_sizes)
    if sizes[-1] != 1:
        raise ValueError("output width must be 1")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
    for fan_out in sizes[1:-1]:
        biases.append(np.zeros(fan_out))
    return Network(weights, biases, activation)


def zero_network(layer_sizes, activation: str = "tanh") -> Network:
    sizes = list(layer_sizes)
    weights = [np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(o) for o in sizes[1:-1]]
    return Network(weights, biases, activation)


def collapse_affine(net: Network):
    """Collapse an identity-activation network to ``(W, b)`` with output ``X @ W + b``."""
    if net.activation != "identity":
        raise ValueError("only identity-activation networks collapse to an affine map")
    W = net.weights[0]
    b = np.zeros(W.shape[0]) if not net.biases else net.biases[0].copy()
    for i in range(1, len(net.weights)):
        Wi = net.weights[i]
        W = Wi @ W
        b = Wi @ b
        if i < len(net.biases):
            b = b + net.biases[i]
    return W.ravel(), float(b[0])


def ramp_family_network(c1_free: float, c0: float):
    """Zero-loss family on references with positive position and velocity.

    ``theta = [c0 + c1_free, 0]`` with a ReLU layer ``[-c1_free, 0] relu(x)``
    reproduces ``c0 * r`` for every ``c1_free``.
    """
    theta = LinearModel([c0 + c1_free, 0.0])
    net = Network([np.eye(2), [[-c1_free, 0.0]]], [np.zeros(2)], "relu")
    return theta, net


def save_checkpoint(net: Network, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(net.to_dict()) + "\n")
    return path


def load_checkpoint(path) -> Network:
    return Network.from_dict(json.loads(Path(path).read_text()))
