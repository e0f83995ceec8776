"""Hierarchical (recursively nested) coupling layers and the HINT map.

A node acting on ``u`` mixes ``u~ = Q u``, splits ``u~ = [u1, u2]`` and
returns ``[T_minus(u1), T_plus(u2) * exp(s(u1)) + t(u1)]`` where ``T_minus``
and ``T_plus`` are child nodes (identity at the leaves).
"""
import numpy as np

from .coupling import DEFAULT_CLAMP, DiagonalAffine, _Cache, _batch, _grad_logdet, default_hidden, default_split
from .mlp import mlp_init
from .numerics import HouseholderStack, householder_apply, householder_apply_adjoint


class SplitNode:
    def __init__(self, dim, split, Q, s_net, t_net, minus=None, plus=None):
        d1, d2 = split
        if d1 < 1 or d2 < 1 or d1 + d2 != dim:
            raise ValueError(f"invalid split {split} for dim {dim}")
        if Q.dim != dim:
            raise ValueError("mixing stack dimension differs from node dimension")
        if minus is not None and minus.dim != d1:
            raise ValueError("minus child dimension differs from the upper split part")
        if plus is not None and plus.dim != d2:
            raise ValueError("plus child dimension differs from the lower split part")
        for net in (s_net, t_net):
            if net.n_in != d1 or net.n_out != d2:
                raise ValueError(f"subnet shape {net.widths} does not match split {split}")
        self.dim = dim
        self.split = (d1, d2)
        self.Q = Q
        self.s_net = s_net
        self.t_net = t_net
        self.minus = minus
        self.plus = plus

    def nodes(self):
        """Pre-order traversal: self, minus subtree, plus subtree."""
        yield self
        if self.minus is not None:
            yield from self.minus.nodes()
        if self.plus is not None:
            yield from self.plus.nodes()

    @property
    def depth(self):
        kids = [c.depth for c in (self.minus, self.plus) if c is not None]
        return 1 + (max(kids) if kids else 0)

    @property
    def params(self):
        out = self.s_net.params + self.t_net.params
        if self.minus is not None:
            out += self.minus.params
        if self.plus is not None:
            out += self.plus.params
        return out

    def forward(self, U):
        d1 = self.split[0]
        ut = householder_apply(self.Q, U) if self.Q.count else U
        u1, u2 = ut[:, :d1], ut[:, d1:]
        if self.minus is not None:
            a, ld_a, c_a = self.minus.forward(u1)
        else:
            a, ld_a, c_a = u1, 0.0, None
        if self.plus is not None:
            b, ld_b, c_b = self.plus.forward(u2)
        else:
            b, ld_b, c_b = u2, 0.0, None
        s, cs = self.s_net.forward(u1)
        t, ct = self.t_net.forward(u1)
        es = np.exp(s)
        v = np.concatenate([a, b * es + t], axis=1)
        logdet = s.sum(axis=1) + ld_a + ld_b
        return v, logdet, (b, es, cs, ct, c_a, c_b)

    def inverse(self, V):
        d1 = self.split[0]
        v1, v2 = V[:, :d1], V[:, d1:]
        u1 = self.minus.inverse(v1) if self.minus is not None else v1
        s, _ = self.s_net.forward(u1)
        t, _ = self.t_net.forward(u1)
        b = (v2 - t) * np.exp(-s)
        u2 = self.plus.inverse(b) if self.plus is not None else b
        ut = np.concatenate([u1, u2], axis=1)
        return householder_apply_adjoint(self.Q, ut) if self.Q.count else ut

    def backward(self, cache, G, gld):
        b, es, cs, ct, c_a, c_b = cache
        d1 = self.split[0]
        g1, g2 = G[:, :d1], G[:, d1:]
        gs = g2 * b * es + gld[:, None]
        gin_s, grads = self.s_net.backward(cs, gs)
        gin_t, grads_t = self.t_net.backward(ct, g2)
        grads = grads + grads_t
        gb = g2 * es
        if self.minus is not None:
            g_a, grads_a = self.minus.backward(c_a, g1, gld)
            grads += grads_a
        else:
            g_a = g1
        # same summation order as CouplingLayer.backward
        gu1 = g_a + gin_s + gin_t
        if self.plus is not None:
            gu2, grads_b = self.plus.backward(c_b, gb, gld)
            grads += grads_b
        else:
            gu2 = gb
        gut = np.concatenate([gu1, gu2], axis=1)
        gu = householder_apply_adjoint(self.Q, gut) if self.Q.count else gut
        return gu, grads


class SplitTree:
    """One hierarchical layer: a binary tree of :class:`SplitNode`."""

    def __init__(self, root):
        self.root = root
        self.dim = root.dim

    @property
    def H(self):
        return sum(1 for _ in self.root.nodes())

    @property
    def depth(self):
        return self.root.depth

    @property
    def params(self):
        return self.root.params

    def forward(self, u):
        U, single = _batch(u, self.dim)
        v, logdet, c = self.root.forward(U)
        logdet = np.broadcast_to(logdet, (U.shape[0],)).astype(np.float64)
        cache = _Cache(self, (U.shape[0], c))
        if single:
            return v[0], float(logdet[0]), cache
        return v, logdet, cache

    def inverse(self, v):
        V, single = _batch(v, self.dim)
        u = self.root.inverse(V)
        return u[0] if single else u

    def backward(self, cache, grad_v, grad_logdet):
        if cache.owner is not self:
            raise ValueError("cache does not belong to this tree")
        n, c = cache.data
        G = np.asarray(grad_v, dtype=np.float64).reshape(n, self.dim)
        return self.root.backward(c, G, _grad_logdet(grad_logdet, n))


def _make_node(dim, split, rng, mixing, hidden, clamp, leaky_slope, n_reflectors, final_scale):
    d1, d2 = split
    if mixing:
        k = min(dim, 8) if n_reflectors is None else n_reflectors
        Q = HouseholderStack.random(dim, k, rng)
    else:
        Q = HouseholderStack.identity(dim)
    h = default_hidden(d1) if hidden is None else list(hidden)
    s_net = mlp_init([d1, *h, d2], rng, leaky_slope=leaky_slope, clamp=clamp, final_scale=final_scale)
    t_net = mlp_init([d1, *h, d2], rng, leaky_slope=leaky_slope, clamp=None, final_scale=final_scale)
    return SplitNode(dim, split, Q, s_net, t_net)


def _build_subtree(dim, levels, rng, **kw):
    """Balanced subtree with at most ``levels`` levels; dim-1 parts are leaves."""
    if levels < 1 or dim < 2:
        return None
    node = _make_node(dim, default_split(dim), rng, True, **kw)
    node.minus = _build_subtree(node.split[0], levels - 1, rng, **kw)
    node.plus = _build_subtree(node.split[1], levels - 1, rng, **kw)
    return node


def build_split_tree(
    dim_y,
    dim_x,
    depth,
    rng,
    kr=True,
    hidden=None,
    clamp=DEFAULT_CLAMP,
    leaky_slope=0.01,
    n_reflectors=None,
    final_scale=1.0,
):
    """Tree whose root splits (dim_y | dim_x); children split balanced until
    ``depth`` levels exist or a part has dimension 1.

    With ``kr=True`` the root carries no mixing, which keeps the y-block of the
    output a function of the y-block of the input only.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if dim_y < 1 or dim_x < 1:
        raise ValueError("dimensions must be positive")
    kw = dict(hidden=hidden, clamp=clamp, leaky_slope=leaky_slope, n_reflectors=n_reflectors, final_scale=final_scale)
    root = _make_node(dim_y + dim_x, (dim_y, dim_x), rng, not kr, **kw)
    root.minus = _build_subtree(dim_y, depth - 1, rng, **kw)
    root.plus = _build_subtree(dim_x, depth - 1, rng, **kw)
    return SplitTree(root)


def tree_from_coupling(layer):
    """Depth-1 tree carrying the same parameters as a Householder coupling layer."""
    return SplitTree(SplitNode(layer.dim, layer.split, layer.mixing, layer.s_net, layer.t_net))


class HintMap:
    """Composition of hierarchical layers on w = [y, x] in R^(m + d)."""

    def __init__(self, layers, dim_y, dim_x, kr_enforced=True, normalizer=None):
        if not layers:
            raise ValueError("a HintMap needs at least one layer")
        dim = dim_y + dim_x
        if any(t.dim != dim for t in layers):
            raise ValueError("every layer must act on dim_y + dim_x coordinates")
        if kr_enforced:
            for t in layers:
                if t.root.split != (dim_y, dim_x) or t.root.Q.count != 0:
                    raise ValueError("KR enforcement needs root split (m | d) and identity root mixing")
        if normalizer is not None and normalizer.dim != dim:
            raise ValueError("normalizer dimension differs from map dimension")
        self.layers = list(layers)
        self.dim_y = dim_y
        self.dim_x = dim_x
        self.dim = dim
        self.kr_enforced = kr_enforced
        self.normalizer = normalizer

    @property
    def params(self):
        out = []
        for t in self.layers:
            out.extend(t.params)
        return out

    def _stages(self):
        return ([self.normalizer] if self.normalizer is not None else []) + self.layers

    def forward(self, w):
        W, single = _batch(w, self.dim)
        caches = []
        logdet = np.zeros(W.shape[0])
        z = W
        for stage in self._stages():
            z, ld, c = stage.forward(z)
            logdet = logdet + ld
            caches.append(c)
        cache = _Cache(self, tuple(caches))
        if single:
            return z[0], float(logdet[0]), cache
        return z, logdet, cache

    def inverse(self, z):
        Z, single = _batch(z, self.dim)
        w = Z
        for stage in reversed(self._stages()):
            w = stage.inverse(w)
        return w[0] if single else w

    def backward(self, cache, grad_z, grad_logdet):
        if cache.owner is not self:
            raise ValueError("cache does not belong to this map")
        stages = self._stages()
        if len(cache.data) != len(stages):
            raise ValueError("cache does not match the map's layers")
        g = np.asarray(grad_z, dtype=np.float64)
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

    def marginal_forward_y(self, y):
        """T^y(y): runs only the y-branch of every layer."""
        if not self.kr_enforced:
            raise ValueError("marginal y-map requires a KR-enforced map")
        Y, single = _batch(y, self.dim_y)
        if self.normalizer is not None:
            Y = (Y - self.normalizer.shift[: self.dim_y]) / self.normalizer.scale[: self.dim_y]
        for t in self.layers:
            if t.root.minus is not None:
                Y, _, _ = t.root.minus.forward(Y)
        return Y[0] if single else Y


def build_hint(dim_y, dim_x, n_layers, depth, rng, kr=True, normalizer=None, **tree_kwargs):
    layers = [build_split_tree(dim_y, dim_x, depth, rng, kr=kr, **tree_kwargs) for _ in range(n_layers)]
    return HintMap(layers, dim_y, dim_x, kr_enforced=kr, normalizer=normalizer)


def hint_layer_forward(tree, u):
    return tree.forward(u)


def hint_layer_inverse(tree, v):
    return tree.inverse(v)


def hint_forward(tmap, w):
    return tmap.forward(w)


def hint_inverse(tmap, z):
    return tmap.inverse(z)


def hint_backward(tmap, caches, grad_z, grad_logdet):
    return tmap.backward(caches, grad_z, grad_logdet)


def marginal_forward_y(tmap, y):
    return tmap.marginal_forward_y(y)
