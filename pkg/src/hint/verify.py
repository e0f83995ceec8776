"""Fast self-check of the structural invariants, used by ``hint verify``."""
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .checkpoint import checkpoint_load, checkpoint_save
from .coupling import build_inn
from .hierarchical import build_hint
from .numerics import MobiusParams, mobius_forward, mobius_inverse
from .oracles import GaussianPosterior, joint_conditioning_filter, kalman_filter
from .transport import loss_case3


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    seconds: float = 0.0

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: {self.value:.3e} (tol {self.tolerance:.0e}, {self.seconds:.2f}s)"


def fd_jacobian(f, u, h=1e-6):
    """Central-difference Jacobian of ``f: R^n -> R^k`` at a single point."""
    u = np.asarray(u, dtype=np.float64)
    cols = []
    for j in range(u.shape[0]):
        e = np.zeros_like(u)
        e[j] = h
        cols.append((f(u + e) - f(u - e)) / (2 * h))
    return np.stack(cols, axis=1)


def fd_param_grad(loss, params, rng, n_entries=20, h=1e-6):
    """Central differences of ``loss()`` w.r.t. randomly chosen parameter entries.

    Returns ``[(array index, flat index, estimate)]``; parameters are restored.
    """
    picks = []
    sizes = np.array([p.size for p in params], dtype=np.float64)
    for _ in range(n_entries):
        i = int(rng.choice(len(params), p=sizes / sizes.sum()))
        picks.append((i, int(rng.integers(params[i].size))))
    out = []
    for i, k in picks:
        flat = params[i].reshape(-1)
        old = flat[k]
        flat[k] = old + h
        lp = loss()
        flat[k] = old - h
        lm = loss()
        flat[k] = old
        out.append((i, k, (lp - lm) / (2 * h)))
    return out


def relative_grad_error(analytic, fd_entries):
    a = np.array([analytic[i].reshape(-1)[k] for i, k, _ in fd_entries])
    f = np.array([v for _, _, v in fd_entries])
    return float(np.max(np.abs(a - f)) / max(np.max(np.abs(f)), 1e-12))


def conformality_error(p, u):
    """max |J J^T - |det J|^{2/n} I| for the Moebius block at ``u``."""
    J = fd_jacobian(lambda x: mobius_forward(p, x)[0], u, h=1e-6)
    n = J.shape[0]
    c = abs(np.linalg.det(J)) ** (2.0 / n)
    return float(np.max(np.abs(J @ J.T - c * np.eye(n))) / c)


def _timed(name, tol, fn):
    t0 = time.perf_counter()
    v = float(fn())
    return CheckResult(name, bool(v <= tol), v, tol, time.perf_counter() - t0)


def run_invariant_suite(rng=None):
    rng = rng if rng is not None else np.random.default_rng(0)
    inn = build_inn(5, 3, rng)
    hint = build_hint(2, 4, 3, 2, rng)
    results = []

    def invert():
        err = 0.0
        for m in (inn, hint):
            u = rng.standard_normal((500, m.dim))
            err = max(err, np.max(np.abs(m.inverse(m.forward(u)[0]) - u)))
        return err

    def logdet():
        err = 0.0
        for m in (inn, hint):
            u = rng.standard_normal(m.dim)
            J = fd_jacobian(lambda x: m.forward(x)[0], u)
            ld = float(np.ravel(m.forward(u)[1])[0])
            err = max(err, abs(ld - np.linalg.slogdet(J)[1]) / max(1.0, abs(ld)))
        return err

    def grads():
        w = rng.standard_normal((64, hint.dim))
        _, g = loss_case3(hint, w)
        fd = fd_param_grad(lambda: loss_case3(hint, w)[0], hint.params, rng)
        return relative_grad_error(g, fd)

    def kr():
        w = rng.standard_normal(hint.dim)
        J = fd_jacobian(lambda x: hint.forward(x)[0], w)
        block = np.max(np.abs(J[:hint.dim_y, hint.dim_y:]))
        diff = np.max(np.abs(hint.marginal_forward_y(w[:hint.dim_y]) - hint.forward(w)[0][:hint.dim_y]))
        return max(block, diff)

    def mobius():
        err = 0.0
        for gamma in (0, 2):
            p = MobiusParams.near_isometry(4, rng, gamma=gamma)
            u = rng.standard_normal(4)
            err = max(err, conformality_error(p, u), np.max(np.abs(mobius_inverse(p, mobius_forward(p, u)[0]) - u)))
        return err

    def kalman():
        A = 0.9 * np.linalg.qr(rng.standard_normal((3, 3)))[0]
        H = rng.standard_normal((2, 3))
        prior = GaussianPosterior(rng.standard_normal(3), np.eye(3))
        ys = rng.standard_normal((5, 2))
        a = kalman_filter(A, 0.3, H, 0.5, prior, ys)
        b = joint_conditioning_filter(A, 0.3, H, 0.5, prior, ys)
        return max(max(np.max(np.abs(p.mean - q.mean)), np.max(np.abs(p.cov - q.cov))) for p, q in zip(a, b))

    def roundtrip():
        with tempfile.TemporaryDirectory() as d:
            path = Path(d) / "ck.json"
            checkpoint_save(hint, path)
            loaded, _ = checkpoint_load(path)
        u = rng.standard_normal((100, hint.dim))
        return float(np.max(np.abs(loaded.forward(u)[0] - hint.forward(u)[0])))

    def kernels():
        if not _kernels.HAVE_NUMBA:
            return 0.0
        X = 1.0 + 0.1 * rng.standard_normal((32, 8))
        a = _kernels.rk4_lorenz96_np(8.0, X, 0.01, 10)[0]
        b = _kernels.rk4_lorenz96_nb(8.0, X, 0.01, 10)[0]
        c = _kernels.log_rosenbrock_np(X, 1e-12) - _kernels.log_rosenbrock_nb(X, 1e-12)
        return max(np.max(np.abs(a - b)), np.max(np.abs(c)))

    for name, tol, fn in [
        ("invertibility", 1e-9, invert),
        ("log-det vs finite differences", 1e-5, logdet),
        ("parameter gradients vs finite differences", 1e-4, grads),
        ("triangular (KR) structure", 1e-12, kr),
        ("Moebius conformality and inverse", 1e-5, mobius),
        ("Kalman vs joint conditioning", 1e-10, kalman),
        ("checkpoint round trip", 0.0, roundtrip),
        ("numba vs numpy kernels", 1e-10, kernels),
    ]:
        results.append(_timed(name, tol, fn))
    return results
