"""Fully connected leaky-ReLU networks with a hand-written backward pass."""
from dataclasses import dataclass

import numpy as np


@dataclass
class DenseNet:
    """Affine layers with leaky-ReLU between them; the last layer is affine,
    optionally squashed to (-c, c) by ``c * tanh(pre / c)``.

    ``weights[i]`` has shape ``(widths[i + 1], widths[i])``.
    """

    widths: list
    weights: list
    biases: list
    leaky_slope: float = 0.01
    output_clamp: float = None

    def __post_init__(self):
        if len(self.weights) != len(self.widths) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("layer count does not match widths")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.widths[i + 1], self.widths[i]) or b.shape != (self.widths[i + 1],):
                raise ValueError(f"layer {i} has inconsistent shapes {W.shape}, {b.shape}")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ValueError("leaky_slope must lie in (0, 1)")
        if self.output_clamp is not None and self.output_clamp <= 0:
            raise ValueError("output_clamp must be positive")

    @property
    def n_in(self):
        return self.widths[0]

    @property
    def n_out(self):
        return self.widths[-1]

    @property
    def params(self):
        """Parameter arrays (views, mutated in place by optimizers): W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.append(W)
            out.append(b)
        return out

    def forward(self, u):
        """Evaluate the net on a vector or a batch; returns ``(output, cache)``."""
        X = np.asarray(u, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] != self.n_in:
            raise ValueError(f"dimension mismatch: net expects {self.n_in} inputs, got {X.shape[1]}")
        acts = [X]
        pres = []
        a = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W.T + b
            pres.append(z)
            if i < last:
                a = np.where(z > 0, z, self.leaky_slope * z)
                acts.append(a)
            else:
                a = z
        if self.output_clamp is not None:
            c = self.output_clamp
            a = c * np.tanh(z / c)
        cache = ForwardCache(self, acts, pres, single)
        return (a[0] if single else a), cache

    def backward(self, cache, grad_out):
        """Reverse pass for the scalar ``sum(grad_out * output)``.

        Returns ``(grad_in, grads)`` with ``grads`` aligned with :attr:`params`
        and summed over the batch.
        """
        if cache.net is not self:
            raise ValueError("cache was produced by a different network")
        g = np.asarray(grad_out, dtype=np.float64)
        if cache.single:
            g = g[None, :]
        n = cache.acts[0].shape[0]
        if g.shape != (n, self.n_out):
            raise ValueError(f"grad_out has shape {g.shape}, expected {(n, self.n_out)}")
        if self.output_clamp is not None:
            th = np.tanh(cache.pres[-1] / self.output_clamp)
            g = g * (1.0 - th * th)
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = g.T @ cache.acts[i]
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i]
            if i > 0:
                g = g * np.where(cache.pres[i - 1] > 0, 1.0, self.leaky_slope)
        return (g[0] if cache.single else g), grads


@dataclass
class ForwardCache:
    net: DenseNet
    acts: list
    pres: list
    single: bool


def mlp_init(widths, rng, leaky_slope=0.01, clamp=None, final_scale=1.0):
    """Kaiming-normal weights N(0, 2/fan_in), zero biases.

    ``final_scale`` multiplies the last layer's weights; 0 gives a net that
    outputs exactly zero.
    """
    widths = [int(w) for w in widths]
    if len(widths) < 2 or any(w <= 0 for w in widths):
        raise ValueError(f"widths must contain at least two positive entries, got {widths}")
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    weights[-1] *= final_scale
    return DenseNet(widths, weights, biases, leaky_slope=leaky_slope, output_clamp=clamp)


def zeros_like_params(params):
    return [np.zeros_like(p) for p in params]


def leaky_relu(x, slope=0.01):
    return np.where(x > 0, x, slope * x)
