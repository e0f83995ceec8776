"""Hot inner loops with a numba path and a pure-numpy path.

The numba path is used when numba imports and the environment variable
``HINT_DISABLE_NUMBA`` is unset (or set to ``0``). Both paths are always
importable as ``*_np`` / ``*_nb`` so the benchmark and the tests can compare
them within one process.
"""
import os

import numpy as np

try:
    import numba as nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


def _flag_disabled():
    return os.environ.get("HINT_DISABLE_NUMBA", "0").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = HAVE_NUMBA and not _flag_disabled()


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def householder_apply_np(V, U, adjoint=False):
    """Apply H_k...H_1 (or its transpose) to every row of ``U``."""
    out = np.array(U, dtype=np.float64, copy=True)
    k = V.shape[0]
    order = range(k - 1, -1, -1) if adjoint else range(k)
    for i in order:
        v = V[i]
        out -= 2.0 * np.outer(out @ v, v)
    return out


def rk4_clv_np(r, alpha, U, dt, steps):
    def f(u):
        return r * u * (1.0 - u @ alpha.T)

    u = np.array(U, dtype=np.float64, copy=True)
    for step in range(steps):
        k1 = f(u)
        k2 = f(u + 0.5 * dt * k1)
        k3 = f(u + 0.5 * dt * k2)
        k4 = f(u + dt * k3)
        u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(u)):
            return u, step
    return u, -1


def rk4_lorenz96_np(forcing, U, dt, steps):
    def f(u):
        return (np.roll(u, -1, axis=1) - np.roll(u, 2, axis=1)) * np.roll(u, 1, axis=1) - u + forcing

    u = np.array(U, dtype=np.float64, copy=True)
    for step in range(steps):
        k1 = f(u)
        k2 = f(u + 0.5 * dt * k1)
        k3 = f(u + 0.5 * dt * k2)
        k4 = f(u + dt * k3)
        u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(u)):
            return u, step
    return u, -1


def log_rosenbrock_np(X, eps):
    a = X[:, 1:] - X[:, :-1] ** 2
    b = 1.0 - X[:, :-1]
    return np.log(100.0 * a * a + b * b + eps)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @nb.njit(cache=True)
    def _householder_apply_nb(V, U, adjoint):
        n, d = U.shape
        k = V.shape[0]
        out = U.copy()
        for row in range(n):
            for j in range(k):
                i = k - 1 - j if adjoint else j
                dot = 0.0
                for c in range(d):
                    dot += out[row, c] * V[i, c]
                dot *= 2.0
                for c in range(d):
                    out[row, c] -= dot * V[i, c]
        return out

    @nb.njit(cache=True)
    def _clv_rhs_row(r, alpha, u, out):
        d = u.shape[0]
        for i in range(d):
            acc = 0.0
            for j in range(d):
                acc += alpha[i, j] * u[j]
            out[i] = r[i] * u[i] * (1.0 - acc)

    @nb.njit(cache=True)
    def _rk4_clv_nb(r, alpha, U, dt, steps):
        n, d = U.shape
        out = U.copy()
        k1 = np.empty(d)
        k2 = np.empty(d)
        k3 = np.empty(d)
        k4 = np.empty(d)
        tmp = np.empty(d)
        bad = -1
        for row in range(n):
            u = out[row]
            for step in range(steps):
                _clv_rhs_row(r, alpha, u, k1)
                for c in range(d):
                    tmp[c] = u[c] + 0.5 * dt * k1[c]
                _clv_rhs_row(r, alpha, tmp, k2)
                for c in range(d):
                    tmp[c] = u[c] + 0.5 * dt * k2[c]
                _clv_rhs_row(r, alpha, tmp, k3)
                for c in range(d):
                    tmp[c] = u[c] + dt * k3[c]
                _clv_rhs_row(r, alpha, tmp, k4)
                finite = True
                for c in range(d):
                    u[c] += (dt / 6.0) * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])
                    if not np.isfinite(u[c]):
                        finite = False
                if not finite:
                    if bad < 0 or step < bad:
                        bad = step
                    break
        return out, bad

    @nb.njit(cache=True)
    def _l96_rhs_row(forcing, u, out):
        d = u.shape[0]
        for i in range(d):
            out[i] = (u[(i + 1) % d] - u[(i - 2) % d]) * u[(i - 1) % d] - u[i] + forcing

    @nb.njit(cache=True)
    def _rk4_lorenz96_nb(forcing, U, dt, steps):
        n, d = U.shape
        out = U.copy()
        k1 = np.empty(d)
        k2 = np.empty(d)
        k3 = np.empty(d)
        k4 = np.empty(d)
        tmp = np.empty(d)
        bad = -1
        for row in range(n):
            u = out[row]
            for step in range(steps):
                _l96_rhs_row(forcing, u, k1)
                for c in range(d):
                    tmp[c] = u[c] + 0.5 * dt * k1[c]
                _l96_rhs_row(forcing, tmp, k2)
                for c in range(d):
                    tmp[c] = u[c] + 0.5 * dt * k2[c]
                _l96_rhs_row(forcing, tmp, k3)
                for c in range(d):
                    tmp[c] = u[c] + dt * k3[c]
                _l96_rhs_row(forcing, tmp, k4)
                finite = True
                for c in range(d):
                    u[c] += (dt / 6.0) * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])
                    if not np.isfinite(u[c]):
                        finite = False
                if not finite:
                    if bad < 0 or step < bad:
                        bad = step
                    break
        return out, bad

    @nb.njit(cache=True)
    def _log_rosenbrock_nb(X, eps):
        n, d = X.shape
        out = np.empty((n, d - 1))
        for row in range(n):
            for i in range(d - 1):
                a = X[row, i + 1] - X[row, i] * X[row, i]
                b = 1.0 - X[row, i]
                out[row, i] = np.log(100.0 * a * a + b * b + eps)
        return out

    def householder_apply_nb(V, U, adjoint=False):
        return _householder_apply_nb(
            np.ascontiguousarray(V, dtype=np.float64), np.ascontiguousarray(U, dtype=np.float64), bool(adjoint)
        )

    def rk4_clv_nb(r, alpha, U, dt, steps):
        return _rk4_clv_nb(
            np.ascontiguousarray(r, dtype=np.float64),
            np.ascontiguousarray(alpha, dtype=np.float64),
            np.ascontiguousarray(U, dtype=np.float64),
            float(dt),
            int(steps),
        )

    def rk4_lorenz96_nb(forcing, U, dt, steps):
        return _rk4_lorenz96_nb(float(forcing), np.ascontiguousarray(U, dtype=np.float64), float(dt), int(steps))

    def log_rosenbrock_nb(X, eps):
        return _log_rosenbrock_nb(np.ascontiguousarray(X, dtype=np.float64), float(eps))

else:  # pragma: no cover
    householder_apply_nb = householder_apply_np
    rk4_clv_nb = rk4_clv_np
    rk4_lorenz96_nb = rk4_lorenz96_np
    log_rosenbrock_nb = log_rosenbrock_np


def _pick(nb_fn, np_fn):
    return nb_fn if USE_NUMBA else np_fn


householder_apply = _pick(householder_apply_nb, householder_apply_np)
rk4_clv = _pick(rk4_clv_nb, rk4_clv_np)
rk4_lorenz96 = _pick(rk4_lorenz96_nb, rk4_lorenz96_np)
log_rosenbrock = _pick(log_rosenbrock_nb, log_rosenbrock_np)
