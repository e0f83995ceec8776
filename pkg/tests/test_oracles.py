import numpy as np
import pytest

from hint.oracles import (GaussianPosterior, bootstrap_filter_step, empirical_moments, joint_conditioning_filter,
                          kalman_filter, linear_gaussian_posterior, mse_trace_cov, weighted_moments)

from _oracles import grid_posterior_moments


def test_conjugate_posterior_scalar_closed_form():
    post = linear_gaussian_posterior([[1.0]], 1.0, [0.0], [[1.0]], [2.0])
    assert post.mean[0] == pytest.approx(1.0, abs=1e-15)
    assert post.cov[0, 0] == pytest.approx(0.5, abs=1e-15)


def test_conjugate_posterior_matches_grid_quadrature():
    A = np.array([[1.0, 0.5]])
    mu0, S0 = np.array([0.5, -0.3]), np.array([[1.0, 0.3], [0.3, 0.5]])
    y = np.array([0.8])
    post = linear_gaussian_posterior(A, 0.5, mu0, S0, y)
    mean, cov = grid_posterior_moments(A, 0.5, mu0, S0, y)
    np.testing.assert_allclose(post.mean, mean, atol=1e-6)
    np.testing.assert_allclose(post.cov, cov, atol=1e-6)


def test_conjugate_posterior_validation():
    with pytest.raises(ValueError):
        linear_gaussian_posterior([[1.0]], 0.0, [0.0], [[1.0]], [0.0])
    with pytest.raises(ValueError):
        linear_gaussian_posterior([[1.0]], 1.0, [0.0], [[-1.0]], [0.0])


def test_kalman_matches_joint_conditioning(rng):
    A = np.array([[0.9, 0.2], [-0.1, 0.95]])
    H = np.array([[1.0, 0.0]])
    prior = GaussianPosterior([1.0, 0.0], 0.25 * np.eye(2))
    ys = [rng.standard_normal(1) for _ in range(6)]
    for a, b in zip(kalman_filter(A, 0.3, H, 0.2, prior, ys), joint_conditioning_filter(A, 0.3, H, 0.2, prior, ys)):
        np.testing.assert_allclose(a.mean, b.mean, atol=1e-10)
        np.testing.assert_allclose(a.cov, b.cov, atol=1e-10)


def test_kalman_single_step_is_conjugate_update():
    A = np.eye(2)
    H = np.array([[1.0, 1.0]])
    prior = GaussianPosterior([0.2, 0.1], [[1.0, 0.2], [0.2, 0.7]])
    kf = kalman_filter(A, 0.0, H, 0.4, prior, [np.array([0.5])])[0]
    ref = linear_gaussian_posterior(H, 0.4, prior.mean, prior.cov, [0.5])
    np.testing.assert_allclose(kf.mean, ref.mean, atol=1e-12)
    np.testing.assert_allclose(kf.cov, ref.cov, atol=1e-12)


def test_kalman_dimension_errors():
    prior = GaussianPosterior([0.0, 0.0], np.eye(2))
    with pytest.raises(ValueError):
        kalman_filter(np.eye(3), 0.1, np.ones((1, 2)), 0.1, prior, [[0.0]])
    with pytest.raises(ValueError):
        kalman_filter(np.eye(2), 0.1, np.ones((1, 2)), 0.1, prior, [[0.0, 1.0]])


def test_empirical_moments(rng):
    X = rng.standard_normal((10, 3))
    m, C = empirical_moments(X)
    np.testing.assert_allclose(m, X.mean(axis=0))
    np.testing.assert_allclose(C, np.cov(X, rowvar=False))
    with pytest.raises(ValueError):
        empirical_moments(np.ones((1, 3)))


def test_mse_trace_cov():
    assert mse_trace_cov([1.0, 3.0], 2.0) == 1.0
    with pytest.raises(ValueError):
        mse_trace_cov([], 1.0)


def test_bootstrap_step_recovers_conjugate_posterior():
    r = np.random.default_rng(0)
    X0 = r.standard_normal((200_000, 1))
    X, w = bootstrap_filter_step(X0, lambda X: X, 0.0, lambda X: X, 0.5, np.array([1.0]), r)
    mean, cov = weighted_moments(X, w)
    ref = linear_gaussian_posterior([[1.0]], 0.5, [0.0], [[1.0]], [1.0])
    assert abs(mean[0] - ref.mean[0]) < 0.01
    assert abs(cov[0, 0] / ref.cov[0, 0] - 1.0) < 0.03
    assert w.sum() == pytest.approx(1.0)


def test_gaussian_posterior_symmetrises():
    g = GaussianPosterior([0.0, 0.0], [[1.0, 0.2], [0.4, 1.0]])
    assert g.cov[0, 1] == g.cov[1, 0] == pytest.approx(0.3)
    assert g.trace == 2.0


def test_conjugate_uninformative_likelihood():
    S0 = np.array([[1.0, 0.3], [0.3, 0.5]])
    post = linear_gaussian_posterior(np.eye(2), 1e6, [0.5, -0.3], S0, [10.0, 10.0])
    np.testing.assert_allclose(post.mean, [0.5, -0.3], atol=1e-6)
    np.testing.assert_allclose(post.cov, S0, atol=1e-6)


def test_conjugate_identity_example(rng):
    y = rng.standard_normal(3)
    post = linear_gaussian_posterior(np.eye(3), 1.0, np.zeros(3), np.eye(3), y)
    np.testing.assert_allclose(post.mean, y / 2, atol=1e-15)
    np.testing.assert_allclose(post.cov, 0.5 * np.eye(3), atol=1e-15)


def test_conjugate_vs_grid_10_random_problems(rng):
    for _ in range(10):
        m = int(rng.integers(1, 3))
        A = rng.standard_normal((m, 2))
        B = rng.standard_normal((2, 2))
        S0 = 0.3 * B @ B.T + 0.3 * np.eye(2)
        mu0 = rng.standard_normal(2)
        sigma = float(rng.uniform(0.5, 1.5))
        y = A @ mu0 + rng.standard_normal(m)
        post = linear_gaussian_posterior(A, sigma, mu0, S0, y)
        mean, cov = grid_posterior_moments(A, sigma, mu0, S0, y)
        assert np.max(np.abs(post.mean - mean)) < 1e-4
        assert np.max(np.abs(post.cov - cov)) < 1e-4


def test_kalman_noise_free_limit_collapses_to_truth():
    A = np.array([[0.9, 0.1], [0.0, 1.0]])
    H = np.eye(2)
    prior = GaussianPosterior([0.0, 0.0], np.eye(2))
    truth = np.array([1.0, -1.0])
    ys = []
    x = truth
    for _ in range(3):
        x = A @ x
        ys.append(x.copy())
    last = kalman_filter(A, 1e-8, H, 1e-8, prior, ys)[-1]
    np.testing.assert_allclose(last.mean, x, atol=1e-6)
    assert last.trace < 1e-12


def test_empirical_moment_examples(rng):
    _, C = empirical_moments(np.tile([1.0, 2.0], (5, 1)))
    np.testing.assert_array_equal(C, 0.0)
    v = np.array([0.5, -2.0])
    _, C = empirical_moments(np.stack([v, -v]))
    np.testing.assert_allclose(C, 2 * np.outer(v, v), atol=1e-15)
    m, C = empirical_moments(np.random.default_rng(1).standard_normal((1_000_000, 3)))
    assert np.max(np.abs(m)) < 0.01 and np.max(np.abs(C - np.eye(3))) < 0.02


def test_mse_trace_examples():
    assert mse_trace_cov([2.5, 2.5, 2.5], 2.5) == 0.0
    assert mse_trace_cov([3.0], 2.0) == 1.0
