"""Two-layer sigmoid MLP with hand-written backprop and Adam."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MlpParams:
    dims: tuple
    weights: list  # weights[k] has shape (dims[k], dims[k + 1])
    biases: list

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.weights) != len(self.dims) - 1 or len(self.biases) != len(self.dims) - 1:
            raise ValueError("need one weight matrix and bias vector per layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.dims[k], self.dims[k + 1]):
                raise ValueError(f"layer {k} weight shape {w.shape} != {(self.dims[k], self.dims[k + 1])}")
            if b.shape != (self.dims[k + 1],):
                raise ValueError(f"layer {k} bias shape {b.shape} != {(self.dims[k + 1],)}")

    def is_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.weights + self.biases)

    def copy(self) -> "MlpParams":
        return MlpParams(self.dims, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for pair in zip(self.weights, self.biases) for p in pair])


def init_mlp(dims, rng: np.random.Generator) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2 or min(dims) < 1:
        raise ValueError(f"invalid layer dims {dims}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(dims, weights, biases)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Action values for one input vector or a batch (rows)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.dims[0]:
        raise ValueError(f"input length {x.shape[-1]} != {params.dims[0]}")
    h = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if k < last:
            h = sigmoid(h)
    return h


def squared_error_grads(params: MlpParams, x: np.ndarray, actions: np.ndarray, targets: np.ndarray):
    """Loss ``0.5 * mean((Q(x, a) - y)**2)`` and its gradients.

    Returns ``(loss, weight_grads, bias_grads)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    actions = np.asarray(actions, dtype=np.int64)
    targets = np.asarray(targets, dtype=float)
    n = x.shape[0]
    acts = [x]
    h = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if k < last:
            h = sigmoid(h)
        acts.append(h)
    rows = np.arange(n)
    err = acts[-1][rows, actions] - targets
    loss = 0.5 * float(np.mean(err**2))
    delta = np.zeros_like(acts[-1])
    delta[rows, actions] = err / n
    gw = [None] * len(params.weights)
    gb = [None] * len(params.biases)
    for k in range(last, -1, -1):
        gw[k] = acts[k].T @ delta
        gb[k] = delta.sum(axis=0)
        if k > 0:
            a = acts[k]
            delta = (delta @ params.weights[k].T) * a * (1.0 - a)
    return loss, gw, gb


class Adam:
    def __init__(self, params: MlpParams, lr=0.05, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        tensors = params.weights + params.biases
        self.m = [np.zeros_like(p) for p in tensors]
        self.v = [np.zeros_like(p) for p in tensors]

    def step(self, params: MlpParams, grad_w, grad_b):
        self.t += 1
        tensors = params.weights + params.biases
        grads = list(grad_w) + list(grad_b)
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(tensors, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
