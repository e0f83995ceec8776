"""Orthogonal and conformal mixing blocks.

Vectors are handled row-wise: every function accepts either a single vector
of shape ``(d,)`` or a batch of shape ``(n, d)`` and returns the same rank.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _kernels


class SingularityError(ValueError):
    """Raised when a Moebius map is evaluated at its pole."""


def _as_batch(u):
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 1:
        return u[None, :], True
    if u.ndim != 2:
        raise ValueError(f"expected a vector or a batch of vectors, got shape {u.shape}")
    return u, False


def _restore(out, single):
    return out[0] if single else out


@dataclass
class HouseholderStack:
    """Product Q = H_k ... H_1 of reflections H_i = I - 2 v_i v_i^T.

    ``reflectors`` has shape ``(k, dim)`` with unit-norm rows.
    """

    reflectors: np.ndarray
    dim: int = field(default=None)

    def __post_init__(self):
        V = np.asarray(self.reflectors, dtype=np.float64)
        if V.ndim != 2:
            raise ValueError("reflectors must be a (count, dim) array")
        if self.dim is None:
            if V.shape[0] == 0:
                raise ValueError("an empty stack needs an explicit dim")
            self.dim = V.shape[1]
        if V.shape[0] and V.shape[1] != self.dim:
            raise ValueError(f"reflector dim {V.shape[1]} != stack dim {self.dim}")
        norms = np.linalg.norm(V, axis=1) if V.shape[0] else np.zeros(0)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("reflectors must have unit norm")
        self.reflectors = V.reshape(V.shape[0], self.dim)

    @property
    def count(self):
        return self.reflectors.shape[0]

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros((0, dim)), dim=dim)

    @classmethod
    def random(cls, dim, count, rng):
        """Reflectors drawn uniformly on the sphere."""
        V = np.empty((count, dim))
        for i in range(count):
            v = rng.standard_normal(dim)
            nrm = np.linalg.norm(v)
            while nrm < 1e-8:
                v = rng.standard_normal(dim)
                nrm = np.linalg.norm(v)
            V[i] = v / nrm
        return cls(V, dim=dim)

    def matrix(self):
        """Explicit Q, built column by column from the basis vectors."""
        return householder_apply(self, np.eye(self.dim)).T


def _check_dim(stack, U):
    if U.shape[1] != stack.dim:
        raise ValueError(f"dimension mismatch: input has {U.shape[1]} entries, stack acts on {stack.dim}")


def householder_apply(stack, u):
    U, single = _as_batch(u)
    _check_dim(stack, U)
    if stack.count == 0:
        return _restore(U.copy(), single)
    return _restore(_kernels.householder_apply(stack.reflectors, U, False), single)


def householder_apply_adjoint(stack, u):
    U, single = _as_batch(u)
    _check_dim(stack, U)
    if stack.count == 0:
        return _restore(U.copy(), single)
    return _restore(_kernels.householder_apply(stack.reflectors, U, True), single)


@dataclass
class MobiusParams:
    """Conformal map u -> b + alpha * Q(u - a) / |u - a|^gamma, gamma in {0, 2}."""

    b: np.ndarray
    a: np.ndarray
    alpha: float
    gamma: int
    Q: HouseholderStack

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.float64)
        self.a = np.asarray(self.a, dtype=np.float64)
        if self.alpha == 0:
            raise ValueError("alpha must be nonzero")
        if self.gamma not in (0, 2):
            raise ValueError("gamma must be 0 or 2")
        if not (self.b.shape == self.a.shape == (self.Q.dim,)):
            raise ValueError("b, a and Q must share one dimension")

    @property
    def dim(self):
        return self.Q.dim

    @classmethod
    def near_isometry(cls, dim, rng, n_reflectors=None, radius=None, gamma=2):
        """Inversion centred far from the origin, scaled so it is close to an
        orthogonal map on the unit ball and fixes the origin."""
        k = min(dim, 8) if n_reflectors is None else n_reflectors
        Q = HouseholderStack.random(dim, k, rng)
        R = 4.0 * np.sqrt(dim) if radius is None else radius
        direction = rng.standard_normal(dim)
        a = R * direction / np.linalg.norm(direction)
        if gamma == 0:
            return cls(np.zeros(dim), np.zeros(dim), 1.0, 0, Q)
        alpha = R * R
        b = householder_apply(Q, a)
        return cls(b, a, alpha, 2, Q)


_POLE_TOL = 1e-12


def mobius_forward(p, u):
    """Return (Q_mob(u), log|det grad Q_mob(u)|)."""
    U, single = _as_batch(u)
    _check_dim(p.Q, U)
    dim = p.dim
    w = U - p.a
    base = dim * np.log(abs(p.alpha))
    if p.gamma == 0:
        v = p.b + p.alpha * householder_apply(p.Q, w)
        logdet = np.full(U.shape[0], base)
    else:
        r2 = np.einsum("ij,ij->i", w, w)
        if np.any(r2 <= _POLE_TOL ** 2):
            raise SingularityError("Moebius map evaluated at its pole u == a")
        v = p.b + p.alpha * householder_apply(p.Q, w) / r2[:, None]
        # the inversion w -> w/|w|^2 has |det| = |w|^(-2 dim)
        logdet = base - dim * np.log(r2)
    if single:
        return v[0], float(logdet[0])
    return v, logdet


def mobius_inverse(p, v):
    V, single = _as_batch(v)
    _check_dim(p.Q, V)
    d = V - p.b
    if p.gamma == 0:
        u = p.a + householder_apply_adjoint(p.Q, d) / p.alpha
    else:
        r2 = np.einsum("ij,ij->i", d, d)
        if np.any(r2 <= _POLE_TOL ** 2):
            raise SingularityError("Moebius inverse evaluated at its pole v == b")
        u = p.a + p.alpha * householder_apply_adjoint(p.Q, d) / r2[:, None]
    return _restore(u, single)


def mobius_vjp(p, u, g, g_logdet):
    """Pull back an output cotangent ``g`` and a log-det cotangent through the map."""
    U, _ = _as_batch(u)
    G, _ = _as_batch(g)
    qg = householder_apply_adjoint(p.Q, G)
    if p.gamma == 0:
        return p.alpha * qg
    w = U - p.a
    r2 = np.einsum("ij,ij->i", w, w)[:, None]
    # J = alpha/|w|^2 Q (I - 2 w w^T/|w|^2)
    wq = np.einsum("ij,ij->i", w, qg)[:, None]
    out = (p.alpha / r2) * (qg - 2.0 * w * wq / r2)
    out -= 2.0 * p.dim * np.asarray(g_logdet, dtype=np.float64).reshape(-1, 1) * w / r2
    return out
