"""KL-derived training losses, Monte Carlo training sets and Adam training.

Three regimes are supported:

* ``Case.PRIOR_TO_LIKELIHOOD`` maps prior samples x in R^d to [y, z] and
  needs m < d;
* ``Case.LATENT_TO_POSTERIOR`` maps latent z in R^d to the posterior for
  one fixed observation and evaluates F (and its Jacobian) online;
* ``Case.JOINT_TO_LATENT`` maps joint samples [y, x] to a standard normal
  latent. The sequential filter reuses it unchanged.
"""
import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Non-finite loss or state encountered during training."""


class Case(enum.Enum):
    PRIOR_TO_LIKELIHOOD = 1
    LATENT_TO_POSTERIOR = 2
    JOINT_TO_LATENT = 3
    SEQUENTIAL = 4

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {
            "1": cls.PRIOR_TO_LIKELIHOOD, "case1": cls.PRIOR_TO_LIKELIHOOD, "inn": cls.PRIOR_TO_LIKELIHOOD,
            "2": cls.LATENT_TO_POSTERIOR, "case2": cls.LATENT_TO_POSTERIOR,
            "3": cls.JOINT_TO_LATENT, "case3": cls.JOINT_TO_LATENT, "hint": cls.JOINT_TO_LATENT,
            "4": cls.SEQUENTIAL, "sequential": cls.SEQUENTIAL,
        }
        key = str(value).strip().lower()
        if key not in aliases:
            raise ValueError(f"unknown case {value!r}")
        return aliases[key]


class ForwardProblem:
    """Prior sampler, forward operator F and additive noise level sigma_y.

    ``prior_sampler(rng, n)`` returns an ``(n, d)`` array and ``F`` maps
    ``(n, d)`` to ``(n, m)``. ``F_grad`` (optional) returns ``(n, m, d)``
    Jacobians; ``prior_logpdf`` / ``prior_logpdf_grad`` are only needed by the
    latent-to-posterior regime. Every row pushed through F is counted in
    :attr:`n_forward_evals`.
    """

    def __init__(self, prior_sampler, F, sigma_y, dim_x, dim_y, F_grad=None,
                 prior_logpdf=None, prior_logpdf_grad=None, fd_fallback=True):
        if not sigma_y > 0:
            raise ValueError("sigma_y must be positive")
        self.prior_sampler = prior_sampler
        self._F = F
        self.F_grad = F_grad
        self.sigma_y = float(sigma_y)
        self.dim_x = int(dim_x)
        self.dim_y = int(dim_y)
        self.prior_logpdf = prior_logpdf
        self.prior_logpdf_grad = prior_logpdf_grad
        self.fd_fallback = fd_fallback
        self.n_forward_evals = 0
        self.n_forward_calls = 0

    def forward(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        self.n_forward_calls += 1
        self.n_forward_evals += X.shape[0]
        out = np.asarray(self._F(X), dtype=np.float64).reshape(X.shape[0], -1)
        if out.shape[1] != self.dim_y:
            raise ValueError(f"F returned {out.shape[1]} outputs, expected {self.dim_y}")
        return out

    def forward_jacobian(self, X):
        """(n, m, d) Jacobians: analytic if provided, else central differences."""
        if self.F_grad is not None:
            return np.asarray(self.F_grad(X), dtype=np.float64)
        if not self.fd_fallback:
            raise ValueError("no F_grad supplied and finite-difference fallback disabled")
        n, d = X.shape
        J = np.empty((n, self.dim_y, d))
        for j in range(d):
            h = 1e-6 * (1.0 + np.abs(X[:, j]))
            Xp = X.copy()
            Xm = X.copy()
            Xp[:, j] += h
            Xm[:, j] -= h
            J[:, :, j] = (self.forward(Xp) - self.forward(Xm)) / (2.0 * h)[:, None]
        return J

    def logprior_and_grad(self, X):
        if self.prior_logpdf is None:
            raise ValueError("this regime needs prior_logpdf")
        lp = np.asarray(self.prior_logpdf(X), dtype=np.float64).reshape(X.shape[0])
        if self.prior_logpdf_grad is not None:
            return lp, np.asarray(self.prior_logpdf_grad(X), dtype=np.float64)
        if not self.fd_fallback:
            raise ValueError("no prior_logpdf_grad supplied and finite-difference fallback disabled")
        g = np.empty_like(X)
        for j in range(X.shape[1]):
            h = 1e-6 * (1.0 + np.abs(X[:, j]))
            Xp = X.copy()
            Xm = X.copy()
            Xp[:, j] += h
            Xm[:, j] -= h
            g[:, j] = (self.prior_logpdf(Xp) - self.prior_logpdf(Xm)) / (2.0 * h)
        return lp, g


@dataclass
class SigmaAnneal:
    """sigma_y used at epoch e: max(sigma_true, start * factor**e)."""

    start: float
    factor: float

    def sigma(self, epoch, floor):
        return max(floor, self.start * self.factor ** epoch)


@dataclass
class LossSpec:
    case: Case
    batch_size: int = 256
    observed_y: np.ndarray = None
    anneal: SigmaAnneal = None

    def __post_init__(self):
        self.case = Case.parse(self.case)
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.case is Case.LATENT_TO_POSTERIOR and self.observed_y is None:
            raise ValueError("the latent-to-posterior regime needs observed_y")
        if self.observed_y is not None:
            self.observed_y = np.asarray(self.observed_y, dtype=np.float64)


# ---------------------------------------------------------------------------
# losses: each returns (mean loss, grads aligned with tmap.params)
# ---------------------------------------------------------------------------

def loss_case1(tmap, x, problem, fx=None, sigma_y=None):
    """Mean of |T^y(x) - F(x)|^2 / (2 s^2) + |T^z(x)|^2 / 2 - log|det grad T(x)|."""
    m = problem.dim_y
    if m >= tmap.dim:
        raise ValueError(f"prior-to-likelihood regime needs m < d (m={m}, d={tmap.dim})")
    x = np.atleast_2d(x)
    if fx is None:
        fx = problem.forward(x)
    s2 = (problem.sigma_y if sigma_y is None else sigma_y) ** 2
    n = x.shape[0]
    v, logdet, cache = tmap.forward(x)
    ry = v[:, :m] - fx
    vz = v[:, m:]
    per = 0.5 * np.sum(ry * ry, axis=1) / s2 + 0.5 * np.sum(vz * vz, axis=1) - logdet
    gv = np.concatenate([ry / s2, vz], axis=1) / n
    _, grads = tmap.backward(cache, gv, np.full(n, -1.0 / n))
    return float(per.mean()), grads


def loss_case2(tmap, z, problem, y):
    """Mean of |y - F(T(z))|^2 / (2 s^2) - log p_x(T(z)) - log|det grad T(z)|."""
    z = np.atleast_2d(z)
    y = np.asarray(y, dtype=np.float64).reshape(1, -1)
    s2 = problem.sigma_y ** 2
    n = z.shape[0]
    x, logdet, cache = tmap.forward(z)
    r = y - problem.forward(x)
    J = problem.forward_jacobian(x)
    lp, glp = problem.logprior_and_grad(x)
    per = 0.5 * np.sum(r * r, axis=1) / s2 - lp - logdet
    gx = -np.einsum("nm,nmd->nd", r, J) / s2 - glp
    _, grads = tmap.backward(cache, gx / n, np.full(n, -1.0 / n))
    return float(per.mean()), grads


def loss_case3(tmap, w):
    """Mean of |T(w)|^2 / 2 - log|det grad T(w)|."""
    w = np.atleast_2d(w)
    if w.shape[1] != tmap.dim:
        raise ValueError(f"dimension mismatch: map acts on {tmap.dim}, batch has {w.shape[1]}")
    n = w.shape[0]
    z, logdet, cache = tmap.forward(w)
    per = 0.5 * np.sum(z * z, axis=1) - logdet
    _, grads = tmap.backward(cache, z / n, np.full(n, -1.0 / n))
    return float(per.mean()), grads


def loss_value(tmap, case, data, problem=None, y=None):
    """Loss without gradients, for monitoring."""
    case = Case.parse(case)
    if case in (Case.JOINT_TO_LATENT, Case.SEQUENTIAL):
        z, logdet, _ = tmap.forward(data)
        return float(np.mean(0.5 * np.sum(z * z, axis=1) - logdet))
    if case is Case.PRIOR_TO_LIKELIHOOD:
        x, fx = data
        m = problem.dim_y
        v, logdet, _ = tmap.forward(x)
        ry = v[:, :m] - fx
        return float(np.mean(0.5 * np.sum(ry * ry, axis=1) / problem.sigma_y ** 2
                             + 0.5 * np.sum(v[:, m:] ** 2, axis=1) - logdet))
    x, logdet, _ = tmap.forward(data)
    r = np.asarray(y).reshape(1, -1) - problem.forward(x)
    lp = problem.prior_logpdf(x)
    return float(np.mean(0.5 * np.sum(r * r, axis=1) / problem.sigma_y ** 2 - lp - logdet))


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def for_params(cls, params, **kw):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adam_step(state, params, grads):
    """In-place bias-corrected Adam update of ``params``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch {p.shape} / {g.shape} / {m.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def sample_joint(problem, rng, n=None):
    """w = [F(x) + sigma_y xi, x] with x from the prior; one row per sample."""
    single = n is None
    x = problem.prior_sampler(rng, 1 if single else n)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = problem.forward(x) + problem.sigma_y * rng.standard_normal((x.shape[0], problem.dim_y))
    w = np.concatenate([y, x], axis=1)
    return w[0] if single else w


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)
    wall_time: float = 0.0
    seed: object = None
    steps: int = 0
    params: list = None


def make_training_set(spec, problem, train_set_size, rng):
    """Offline data for the prior-to-likelihood and joint regimes, latents otherwise."""
    if train_set_size < 1:
        raise ValueError("training set must be nonempty")
    if spec.case is Case.PRIOR_TO_LIKELIHOOD:
        x = np.atleast_2d(problem.prior_sampler(rng, train_set_size))
        return x, problem.forward(x)
    if spec.case in (Case.JOINT_TO_LATENT, Case.SEQUENTIAL):
        return sample_joint(problem, rng, train_set_size)
    return rng.standard_normal((train_set_size, problem.dim_x))


def _n_rows(data):
    return data[0].shape[0] if isinstance(data, tuple) else data.shape[0]


def train(tmap, spec, problem, epochs, train_set_size, rng, lr=1e-3, lr_decay=1.0,
          data=None, callback=None, seed=None, adam=None):
    """Minibatch Adam on a fixed Monte Carlo training set.

    For the prior-to-likelihood and joint regimes the training set (including
    every F evaluation) is produced once before the first epoch; pass ``data``
    to supply it directly. The latent regime calls F on every minibatch.
    ``lr_decay`` multiplies the learning rate after every epoch; ``callback``
    is called as ``callback(epoch, loss)`` after each epoch.
    """
    t0 = time.perf_counter()
    if data is None:
        data = make_training_set(spec, problem, train_set_size, rng)
    n = _n_rows(data)
    if n == 0:
        raise ValueError("training set must be nonempty")
    params = tmap.params
    state = adam if adam is not None else AdamState.for_params(params, lr=lr)
    report = TrainReport(seed=seed)
    bs = min(spec.batch_size, n)
    for epoch in range(epochs):
        sigma = None
        if spec.anneal is not None and spec.case is Case.PRIOR_TO_LIKELIHOOD:
            sigma = spec.anneal.sigma(epoch, problem.sigma_y)
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            if spec.case is Case.PRIOR_TO_LIKELIHOOD:
                loss, grads = loss_case1(tmap, data[0][idx], problem, fx=data[1][idx], sigma_y=sigma)
            elif spec.case is Case.LATENT_TO_POSTERIOR:
                loss, grads = loss_case2(tmap, data[idx], problem, spec.observed_y)
            else:
                loss, grads = loss_case3(tmap, data[idx])
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise NumericalError(f"non-finite loss at epoch {epoch}, step {report.steps}")
            adam_step(state, params, grads)
            report.steps += 1
            total += loss * len(idx)
        report.losses.append(total / n)
        state.lr *= lr_decay
        if callback is not None:
            callback(epoch, report.losses[-1])
        log.debug("epoch %d loss %.6f", epoch, report.losses[-1])
    report.wall_time = time.perf_counter() - t0
    report.params = params
    return report
