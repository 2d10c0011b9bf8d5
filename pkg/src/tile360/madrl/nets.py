"""Feed-forward actor/critic networks with explicit reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class ForwardCache:
    activations: list[np.ndarray]  # input, then each hidden layer output
    output: np.ndarray  # logits or value
    probs: np.ndarray | None = None


class MLP:
    """tanh MLP; ``head='softmax'`` for an actor, ``'linear'`` for a critic."""

    def __init__(self, sizes: Sequence[int], seed: int = 0, head: str = "linear", out_scale: float = 1.0):
        if head not in ("linear", "softmax"):
            raise ValueError(f"unknown head {head!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.head = head
        rng = np.random.default_rng(seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        n_layers = len(self.sizes) - 1
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            scale = np.sqrt(1.0 / fan_in) * (out_scale if i == n_layers - 1 else 1.0)
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    # parameters are exposed as one flat list [W0, b0, W1, b1, ...]
    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def named_parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{i}"] = w
            out[f"b{i}"] = b
        return out

    def load_named(self, tensors: dict[str, np.ndarray]) -> None:
        for i in range(len(self.weights)):
            self.weights[i][...] = tensors[f"W{i}"]
            self.biases[i][...] = tensors[f"b{i}"]

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "MLP":
        new = MLP.__new__(MLP)
        new.sizes, new.head = self.sizes, self.head
        new.weights = [w.copy() for w in self.weights]
        new.biases = [b.copy() for b in self.biases]
        return new

    def forward(self, x: np.ndarray) -> ForwardCache:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {x.shape[1]} != {self.sizes[0]}")
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < last:
                h = np.tanh(z)
                acts.append(h)
            else:
                h = z
        probs = softmax(h) if self.head == "softmax" else None
        return ForwardCache(acts, h, probs)

    def __call__(self, x):
        c = self.forward(x)
        return c.probs if self.head == "softmax" else c.output[:, 0]

    def backward_output(self, cache: ForwardCache, grad_out: np.ndarray) -> list[np.ndarray]:
        """Gradients of sum(grad_out * raw_output) (logits or value) w.r.t. parameters."""
        g = np.asarray(grad_out, dtype=np.float64).reshape(cache.output.shape)
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))  # type: ignore[list-item]
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = cache.activations[i]
            grads[2 * i] = a_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (1.0 - a_in**2)
        return grads

    def backward(self, cache: ForwardCache, upstream: np.ndarray) -> list[np.ndarray]:
        """Parameter gradients for an upstream gradient on the network output.

        For a softmax head the upstream gradient is w.r.t. the probabilities.
        """
        up = np.asarray(upstream, dtype=np.float64)
        if self.head == "softmax":
            p = cache.probs
            up = up.reshape(p.shape)
            up = p * (up - np.sum(up * p, axis=1, keepdims=True))
        return self.backward_output(cache, up)


class Adam:
    def __init__(self, params: Sequence[np.ndarray], lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads: Sequence[np.ndarray]) -> None:
        """Descent step: params -= lr * adam(grads)."""
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def net_forward(net: MLP, x) -> ForwardCache:
    return net.forward(x)


def net_backward(net: MLP, cache: ForwardCache, upstream) -> list[np.ndarray]:
    return net.backward(cache, upstream)
