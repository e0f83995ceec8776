"""Closed-form and brute-force references used to validate the samplers."""
from dataclasses import dataclass

import numpy as np


@dataclass
class GaussianPosterior:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).ravel()
        self.cov = np.asarray(self.cov, dtype=np.float64)
        self.cov = 0.5 * (self.cov + self.cov.T)

    @property
    def trace(self):
        return float(np.trace(self.cov))


def _spd_inverse(S, what):
    S = np.asarray(S, dtype=np.float64)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{what} is not symmetric positive-definite") from exc
    Linv = np.linalg.inv(L)
    return Linv.T @ Linv


def linear_gaussian_posterior(A, sigma_y, prior_mean, prior_cov, y):
    """Conjugate posterior of x ~ N(mu0, S0), y = A x + sigma_y xi."""
    if not sigma_y > 0:
        raise ValueError("sigma_y must be positive")
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    P0 = _spd_inverse(prior_cov, "prior covariance")
    prec = P0 + A.T @ A / sigma_y ** 2
    cov = _spd_inverse(prec, "posterior precision")
    mean = cov @ (P0 @ np.asarray(prior_mean, dtype=np.float64) + A.T @ np.asarray(y, dtype=np.float64) / sigma_y ** 2)
    return GaussianPosterior(mean, cov)


def kalman_filter(A_dyn, sigma_x, A_obs, sigma_y, prior, observations):
    """Filtering posteriors p(x_t | y_1..t) for linear-Gaussian dynamics.

    ``prior`` is the :class:`GaussianPosterior` of x_0; each step predicts
    with ``A_dyn`` and process noise ``sigma_x^2 I`` before updating.
    """
    A_dyn = np.atleast_2d(np.asarray(A_dyn, dtype=np.float64))
    A_obs = np.atleast_2d(np.asarray(A_obs, dtype=np.float64))
    d = A_dyn.shape[0]
    if A_dyn.shape != (d, d) or A_obs.shape[1] != d or prior.mean.shape != (d,):
        raise ValueError("dimension mismatch between dynamics, observation operator and prior")
    mean, cov = prior.mean, prior.cov
    out = []
    R = sigma_y ** 2 * np.eye(A_obs.shape[0])
    for y in observations:
        y = np.asarray(y, dtype=np.float64).ravel()
        if y.shape[0] != A_obs.shape[0]:
            raise ValueError("observation has the wrong dimension")
        mean = A_dyn @ mean
        cov = A_dyn @ cov @ A_dyn.T + sigma_x ** 2 * np.eye(d)
        S = A_obs @ cov @ A_obs.T + R
        K = np.linalg.solve(S, A_obs @ cov).T
        mean = mean + K @ (y - A_obs @ mean)
        cov = cov - K @ S @ K.T
        out.append(GaussianPosterior(mean, cov))
    return out


def joint_conditioning_filter(A_dyn, sigma_x, A_obs, sigma_y, prior, observations):
    """Brute-force reference for :func:`kalman_filter`: build the full joint
    Gaussian of (x_0..x_T, y_1..y_T) and condition on all y up to each t."""
    A_dyn = np.atleast_2d(np.asarray(A_dyn, dtype=np.float64))
    A_obs = np.atleast_2d(np.asarray(A_obs, dtype=np.float64))
    d, m = A_dyn.shape[0], A_obs.shape[0]
    T = len(observations)
    # x = B e with e = (x0 - mu0, eta_1..eta_T, xi_1..xi_T) independent
    n_e = d * (T + 1) + m * T
    Bx = np.zeros((T + 1, d, n_e))
    Bx[0][:, :d] = np.eye(d)
    mu_x = [prior.mean]
    for t in range(1, T + 1):
        Bx[t] = A_dyn @ Bx[t - 1]
        Bx[t][:, d * t:d * (t + 1)] += sigma_x * np.eye(d)
        mu_x.append(A_dyn @ mu_x[-1])
    By = np.zeros((T, m, n_e))
    for t in range(1, T + 1):
        By[t - 1] = A_obs @ Bx[t]
        off = d * (T + 1) + m * (t - 1)
        By[t - 1][:, off:off + m] += sigma_y * np.eye(m)
    # covariance of e: prior block, unit elsewhere
    Ce = np.eye(n_e)
    Ce[:d, :d] = prior.cov
    out = []
    for t in range(1, T + 1):
        Byt = By[:t].reshape(t * m, n_e)
        mu_y = np.concatenate([A_obs @ mu_x[s] for s in range(1, t + 1)])
        yobs = np.concatenate([np.asarray(observations[s], dtype=np.float64).ravel() for s in range(t)])
        Sxx = Bx[t] @ Ce @ Bx[t].T
        Sxy = Bx[t] @ Ce @ Byt.T
        Syy = Byt @ Ce @ Byt.T
        gain = np.linalg.solve(Syy, Sxy.T).T
        out.append(GaussianPosterior(mu_x[t] + gain @ (yobs - mu_y), Sxx - gain @ Sxy.T))
    return out


def empirical_moments(samples):
    """Sample mean and unbiased covariance of the rows of ``samples``."""
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if X.shape[0] < 2:
        raise ValueError("need at least two samples")
    mean = X.mean(axis=0)
    D = X - mean
    return mean, D.T @ D / (X.shape[0] - 1)


def mse_trace_cov(estimated, reference):
    """Mean squared deviation of estimated covariance traces from a reference trace."""
    est = np.asarray(estimated, dtype=np.float64).ravel()
    if est.size == 0:
        raise ValueError("need at least one estimate")
    return float(np.mean((est - reference) ** 2))


def bootstrap_filter_step(particles, M, sigma_x, F, sigma_y, y, rng, clip_min=None):
    """One predict/weight step of a bootstrap particle filter.

    Returns ``(predicted particles, normalised weights)``.
    """
    X = M(particles)
    X = X + sigma_x * rng.standard_normal(X.shape)
    if clip_min is not None:
        X = np.maximum(X, clip_min)
    r = np.asarray(y).reshape(1, -1) - F(X)
    logw = -0.5 * np.sum(r * r, axis=1) / sigma_y ** 2
    logw -= logw.max()
    w = np.exp(logw)
    return X, w / w.sum()


def weighted_moments(X, w):
    mean = w @ X
    D = X - mean
    cov = (D * w[:, None]).T @ D / (1.0 - np.sum(w * w))
    return mean, cov
