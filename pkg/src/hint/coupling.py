"""Flat affine coupling layers and their composition.

All maps in this package share one duck-typed interface, operating on
batches of shape ``(n, dim)``:

``forward(u) -> (v, logdet, cache)``, ``inverse(v) -> u``,
``backward(cache, grad_v, grad_logdet) -> (grad_u, grads)`` and a ``params``
list whose order matches ``grads``.
"""
from dataclasses import dataclass

import numpy as np

from .mlp import DenseNet, mlp_init
from .numerics import (
    HouseholderStack,
    MobiusParams,
    householder_apply,
    householder_apply_adjoint,
    mobius_forward,
    mobius_inverse,
    mobius_vjp,
)

DEFAULT_CLAMP = 2.0


def _batch(u, dim):
    U = np.asarray(u, dtype=np.float64)
    single = U.ndim == 1
    if single:
        U = U[None, :]
    if U.ndim != 2 or U.shape[1] != dim:
        raise ValueError(f"dimension mismatch: expected (..., {dim}), got {np.shape(u)}")
    return U, single


def _grad_logdet(g, n):
    g = np.asarray(g, dtype=np.float64)
    if g.ndim == 0:
        return np.full(n, float(g))
    return g.reshape(n)


def default_split(dim):
    return (dim + 1) // 2, dim // 2


def default_hidden(n_in):
    return [4 * n_in, 4 * n_in]


@dataclass
class _Cache:
    owner: object
    data: tuple


class CouplingLayer:
    """v = [u1~, u2~ * exp(s(u1~)) + t(u1~)] with u~ = mixing(u)."""

    def __init__(self, dim, split, mixing, s_net, t_net):
        d1, d2 = split
        if d1 < 1 or d2 < 1 or d1 + d2 != dim:
            raise ValueError(f"invalid split {split} for dim {dim}")
        if mixing.dim != dim:
            raise ValueError("mixing block dimension differs from layer dimension")
        for net in (s_net, t_net):
            if net.n_in != d1 or net.n_out != d2:
                raise ValueError(f"subnet shape {net.widths} does not match split {split}")
        self.dim = dim
        self.split = (d1, d2)
        self.mixing = mixing
        self.s_net = s_net
        self.t_net = t_net

    @property
    def conformal(self):
        return isinstance(self.mixing, MobiusParams)

    @property
    def params(self):
        return self.s_net.params + self.t_net.params

    def _mix(self, U):
        if self.conformal:
            return mobius_forward(self.mixing, U)
        return householder_apply(self.mixing, U), 0.0

    def forward(self, u):
        U, single = _batch(u, self.dim)
        d1 = self.split[0]
        ut, ld_mix = self._mix(U)
        u1, u2 = ut[:, :d1], ut[:, d1:]
        s, cs = self.s_net.forward(u1)
        t, ct = self.t_net.forward(u1)
        es = np.exp(s)
        v = np.concatenate([u1, u2 * es + t], axis=1)
        logdet = s.sum(axis=1) + ld_mix
        cache = _Cache(self, (U, u2, es, cs, ct))
        if single:
            return v[0], float(logdet[0]), cache
        return v, logdet, cache

    def inverse(self, v):
        V, single = _batch(v, self.dim)
        d1 = self.split[0]
        v1, v2 = V[:, :d1], V[:, d1:]
        s, _ = self.s_net.forward(v1)
        t, _ = self.t_net.forward(v1)
        ut = np.concatenate([v1, (v2 - t) * np.exp(-s)], axis=1)
        if self.conformal:
            u = mobius_inverse(self.mixing, ut)
        else:
            u = householder_apply_adjoint(self.mixing, ut)
        return u[0] if single else u

    def backward(self, cache, grad_v, grad_logdet):
        if cache.owner is not self:
            raise ValueError("cache does not belong to this layer")
        U, u2, es, cs, ct = cache.data
        G = np.asarray(grad_v, dtype=np.float64).reshape(U.shape)
        gld = _grad_logdet(grad_logdet, U.shape[0])
        d1 = self.split[0]
        g1, g2 = G[:, :d1], G[:, d1:]
        gs = g2 * u2 * es + gld[:, None]
        gin_s, grads_s = self.s_net.backward(cs, gs)
        gin_t, grads_t = self.t_net.backward(ct, g2)
        gut = np.concatenate([g1 + gin_s + gin_t, g2 * es], axis=1)
        if self.conformal:
            gu = mobius_vjp(self.mixing, U, gut, gld)
        else:
            gu = householder_apply_adjoint(self.mixing, gut)
        return gu, grads_s + grads_t


class DiagonalAffine:
    """Fixed coordinate-wise standardisation u -> (u - shift) / scale.

    Diagonal, so it preserves any block-triangular structure of the map it
    precedes. Carries no trainable parameters.
    """

    def __init__(self, shift, scale):
        self.shift = np.asarray(shift, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)
        if self.shift.shape != self.scale.shape or self.shift.ndim != 1:
            raise ValueError("shift and scale must be vectors of one length")
        if np.any(self.scale <= 0):
            raise ValueError("scale entries must be positive")
        self.dim = self.shift.shape[0]
        self._logdet = -float(np.sum(np.log(self.scale)))

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim), np.ones(dim))

    @classmethod
    def fit(cls, data, floor=1e-8):
        data = np.asarray(data, dtype=np.float64)
        return cls(data.mean(axis=0), np.maximum(data.std(axis=0), floor))

    @property
    def params(self):
        return []

    def forward(self, u):
        U, single = _batch(u, self.dim)
        v = (U - self.shift) / self.scale
        logdet = np.full(U.shape[0], self._logdet)
        cache = _Cache(self, (U.shape[0],))
        if single:
            return v[0], float(logdet[0]), cache
        return v, logdet, cache

    def inverse(self, v):
        V, single = _batch(v, self.dim)
        u = V * self.scale + self.shift
        return u[0] if single else u

    def backward(self, cache, grad_v, grad_logdet):
        if cache.owner is not self:
            raise ValueError("cache does not belong to this layer")
        G = np.asarray(grad_v, dtype=np.float64).reshape(cache.data[0], self.dim)
        return G / self.scale, []

    def restrict(self, lo, hi):
        return DiagonalAffine(self.shift[lo:hi], self.scale[lo:hi])


class InnMap:
    """T = T_L o ... o T_1, optionally preceded by a fixed standardisation."""

    def __init__(self, layers, normalizer=None):
        if not layers:
            raise ValueError("an InnMap needs at least one layer")
        dim = layers[0].dim
        if any(layer.dim != dim for layer in layers):
            raise ValueError("all layers must share one dimension")
        if normalizer is not None and normalizer.dim != dim:
            raise ValueError("normalizer dimension differs from map dimension")
        self.layers = list(layers)
        self.dim = dim
        self.normalizer = normalizer

    @property
    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params)
        return out

    def _stages(self):
        return ([self.normalizer] if self.normalizer is not None else []) + self.layers

    def forward(self, u):
        U, single = _batch(u, self.dim)
        caches = []
        logdet = np.zeros(U.shape[0])
        v = U
        for stage in self._stages():
            v, ld, c = stage.forward(v)
            logdet = logdet + ld
            caches.append(c)
        cache = _Cache(self, tuple(caches))
        if single:
            return v[0], float(logdet[0]), cache
        return v, logdet, cache

    def inverse(self, v):
        V, single = _batch(v, self.dim)
        u = V
        for stage in reversed(self._stages()):
            u = stage.inverse(u)
        return u[0] if single else u

    def backward(self, cache, grad_v, grad_logdet):
        if cache.owner is not self:
            raise ValueError("cache does not belong to this map")
        stages = self._stages()
        if len(cache.data) != len(stages):
            raise ValueError("cache does not match the map's layers")
        g = np.asarray(grad_v, dtype=np.float64)
        n = g.shape[0] if g.ndim == 2 else 1
        g = g.reshape(n, self.dim)
        gld = _grad_logdet(grad_logdet, n)
        grads_rev = []
        for stage, c in zip(reversed(stages), reversed(cache.data)):
            g, gr = stage.backward(c, g, gld)
            grads_rev.append(gr)
        grads = []
        for gr in reversed(grads_rev):
            grads.extend(gr)
        return g, grads


def make_coupling_layer(
    dim,
    rng,
    split=None,
    hidden=None,
    clamp=DEFAULT_CLAMP,
    leaky_slope=0.01,
    n_reflectors=None,
    mixing="householder",
    final_scale=1.0,
):
    d1, d2 = default_split(dim) if split is None else split
    hidden = default_hidden(d1) if hidden is None else list(hidden)
    if mixing == "householder":
        k = min(dim, 8) if n_reflectors is None else n_reflectors
        mix = HouseholderStack.random(dim, k, rng)
    elif mixing == "identity":
        mix = HouseholderStack.identity(dim)
    elif mixing == "mobius":
        mix = MobiusParams.near_isometry(dim, rng, n_reflectors=n_reflectors)
    else:
        raise ValueError(f"unknown mixing kind {mixing!r}")
    s_net = mlp_init([d1, *hidden, d2], rng, leaky_slope=leaky_slope, clamp=clamp, final_scale=final_scale)
    t_net = mlp_init([d1, *hidden, d2], rng, leaky_slope=leaky_slope, clamp=None, final_scale=final_scale)
    return CouplingLayer(dim, (d1, d2), mix, s_net, t_net)


def build_inn(dim, n_layers, rng, normalizer=None, **layer_kwargs):
    layers = [make_coupling_layer(dim, rng, **layer_kwargs) for _ in range(n_layers)]
    return InnMap(layers, normalizer=normalizer)


def coupling_forward(layer, u):
    return layer.forward(u)


def coupling_inverse(layer, v):
    return layer.inverse(v)


def inn_forward(tmap, u):
    return tmap.forward(u)


def inn_inverse(tmap, v):
    return tmap.inverse(v)


def inn_backward(tmap, caches, grad_v, grad_logdet):
    return tmap.backward(caches, grad_v, grad_logdet)
