"""Benchmark dynamics, observation operators and a fixed-step RK4 integrator."""
from dataclasses import dataclass

import numpy as np

from . import _kernels

ROSENBROCK_FLOOR = 1e-12


@dataclass
class CLVParams:
    r: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=np.float64).ravel()
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if self.r.shape[0] < 1 or self.alpha.shape != (self.d, self.d):
            raise ValueError("r must be a d-vector and alpha a d x d matrix")

    @property
    def d(self):
        return self.r.shape[0]


@dataclass
class Lorenz96Params:
    d: int
    alpha: float = 8.0

    def __post_init__(self):
        if self.d < 4:
            raise ValueError("Lorenz96 needs d >= 4 for cyclic indexing")


@dataclass
class IntegratorConfig:
    steps_per_unit_time: int = 100

    def __post_init__(self):
        if self.steps_per_unit_time < 1:
            raise ValueError("steps_per_unit_time must be at least 1")

    def n_steps(self, t0, t1):
        return max(1, int(round((t1 - t0) * self.steps_per_unit_time)))


def clv_rhs(p, u):
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != p.d:
        raise ValueError(f"state has {u.shape[-1]} entries, model has {p.d} species")
    return p.r * u * (1.0 - u @ p.alpha.T)


def lorenz96_rhs(p, u):
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != p.d:
        raise ValueError(f"state has {u.shape[-1]} entries, model has d={p.d}")
    return (np.roll(u, -1, axis=-1) - np.roll(u, 2, axis=-1)) * np.roll(u, 1, axis=-1) - u + p.alpha


class IntegrationError(ArithmeticError):
    pass


def rk4_integrate(rhs, u0, t0, t1, cfg=None):
    """Classical RK4 with ``cfg.n_steps(t0, t1)`` equal steps; ``u0`` may be a batch."""
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    cfg = cfg or IntegratorConfig()
    steps = cfg.n_steps(t0, t1)
    h = (t1 - t0) / steps
    u = np.array(u0, dtype=np.float64, copy=True)
    for i in range(steps):
        k1 = rhs(u)
        k2 = rhs(u + 0.5 * h * k1)
        k3 = rhs(u + 0.5 * h * k2)
        k4 = rhs(u + h * k3)
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(u)):
            raise IntegrationError(f"non-finite state at t = {t0 + (i + 1) * h:.6g}")
    return u


def _propagate(kernel, args, U, t0, t1, cfg):
    cfg = cfg or IntegratorConfig()
    steps = cfg.n_steps(t0, t1)
    h = (t1 - t0) / steps
    U = np.asarray(U, dtype=np.float64)
    single = U.ndim == 1
    out, bad = kernel(*args, np.atleast_2d(U), h, steps)
    if bad >= 0:
        raise IntegrationError(f"non-finite state at t = {t0 + (bad + 1) * h:.6g}")
    return out[0] if single else out


def clv_flow(p, U, t0, t1, cfg=None):
    """Batched RK4 solution of the competitive Lotka-Volterra system."""
    return _propagate(_kernels.rk4_clv, (p.r, p.alpha), U, t0, t1, cfg)


def lorenz96_flow(p, U, t0, t1, cfg=None):
    """Batched RK4 solution of Lorenz96."""
    return _propagate(_kernels.rk4_lorenz96, (p.alpha,), U, t0, t1, cfg)


def obs_select_first(k, x):
    x = np.asarray(x, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > x.shape[-1]:
        raise ValueError(f"cannot select {k} of {x.shape[-1]} coordinates")
    return x[..., :k].copy()


def log_rosenbrock(x, eps=ROSENBROCK_FLOOR):
    """F_i(x) = log(100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2 + eps), i = 1..d-1."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 2:
        raise ValueError("log-Rosenbrock needs d >= 2")
    single = x.ndim == 1
    out = _kernels.log_rosenbrock(np.atleast_2d(x), eps)
    return out[0] if single else out


def log_rosenbrock_jacobian(x, eps=ROSENBROCK_FLOOR):
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n, d = X.shape
    a = X[:, 1:] - X[:, :-1] ** 2
    b = 1.0 - X[:, :-1]
    q = 100.0 * a * a + b * b + eps
    J = np.zeros((n, d - 1, d))
    i = np.arange(d - 1)
    J[:, i, i] = (-400.0 * a * X[:, :-1] - 2.0 * b) / q
    J[:, i, i + 1] = 200.0 * a / q
    return J


# ---------------------------------------------------------------------------
# experiment bundles
# ---------------------------------------------------------------------------

@dataclass
class TransitionProblem:
    """x_t = M(x_{t-1}) + sigma_x eta,  y_t = F(x_t) + sigma_y xi."""

    M: object
    sigma_x: float
    F: object
    sigma_y: float
    dim_x: int
    dim_y: int
    clip_min: float = None

    def __post_init__(self):
        if self.sigma_x < 0:
            raise ValueError("sigma_x must be non-negative")
        if not self.sigma_y > 0:
            raise ValueError("sigma_y must be positive")


@dataclass
class Experiment:
    problem: TransitionProblem
    times: np.ndarray
    truth: np.ndarray
    observations: np.ndarray
    init_mean: np.ndarray
    init_std: float
    params: dict
    seed: object = None

    def init_prior_sampler(self, rng, n):
        return self.init_mean + self.init_std * rng.standard_normal((n, self.init_mean.shape[0]))


def _simulate(problem, x0, times, rng, noise_free):
    truth = [x0]
    obs = []
    x = x0
    for _ in times[1:]:
        x = problem.M(x[None, :])[0]
        if not noise_free:
            x = x + problem.sigma_x * rng.standard_normal(x.shape)
        truth.append(x)
        y = problem.F(x[None, :])[0]
        if not noise_free:
            y = y + problem.sigma_y * rng.standard_normal(y.shape)
        obs.append(y)
    return np.array(truth), np.array(obs)


def make_clv_experiment(rng, d=4, n_obs=10, sigma_x=1e-2, sigma_y=1e-1, n_observed=3,
                        integrator=None, noise_free=False, clip_at_zero=False):
    """Competitive Lotka-Volterra with r, alpha ~ N(1, 0.3^2), observations of
    the first ``n_observed`` species at t = 1..n_obs."""
    integrator = integrator or IntegratorConfig()
    p = CLVParams(rng.normal(1.0, 0.3, size=d), rng.normal(1.0, 0.3, size=(d, d)))

    def M(X):
        return clv_flow(p, X, 0.0, 1.0, integrator)

    def F(X):
        return obs_select_first(n_observed, X)

    problem = TransitionProblem(M, sigma_x, F, sigma_y, d, n_observed, clip_min=0.0 if clip_at_zero else None)
    x0 = 1.0 + 1e-2 * rng.standard_normal(d)
    times = np.arange(n_obs + 1, dtype=np.float64)
    truth, obs = _simulate(problem, x0, times, rng, noise_free)
    params = {"model": "clv", "d": d, "r": p.r.tolist(), "alpha": p.alpha.tolist(), "sigma_x": sigma_x,
              "sigma_y": sigma_y, "n_observed": n_observed, "steps_per_unit_time": integrator.steps_per_unit_time}
    return Experiment(problem, times, truth, obs, np.ones(d), 0.1, params)


def make_lorenz96_experiment(rng, d=40, forcing=8.0, t1=0.1, sigma_x=1e-1, sigma_y=1e-1,
                             integrator=None, noise_free=False):
    """Lorenz96 transition over [0, t1] with a log-Rosenbrock observation (m = d - 1)."""
    integrator = integrator or IntegratorConfig()
    p = Lorenz96Params(d, forcing)

    def M(X):
        return lorenz96_flow(p, X, 0.0, t1, integrator)

    problem = TransitionProblem(M, sigma_x, log_rosenbrock, sigma_y, d, d - 1)
    x0 = 1.0 + 1e-2 * rng.standard_normal(d)
    times = np.array([0.0, t1])
    truth, obs = _simulate(problem, x0, times, rng, noise_free)
    params = {"model": "lorenz96", "d": d, "forcing": forcing, "t1": t1, "sigma_x": sigma_x,
              "sigma_y": sigma_y, "steps_per_unit_time": integrator.steps_per_unit_time}
    return Experiment(problem, times, truth, obs, np.ones(d), 1.0, params)
