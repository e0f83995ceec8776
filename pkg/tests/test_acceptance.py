"""Acceptance suite: one check per criterion, each printing a single PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v -s`` to see the lines; they are also
written through ``capsys.disabled`` so they appear in a normal ``-v`` run.
"""
import time
import warnings

import numpy as np
import pytest

from hint.convergence import MapConfig, check_slope, convergence_study
from hint.coupling import DiagonalAffine, build_inn
from hint.experiments import LinearGaussian, run_clv, run_linear_filter, run_linear_gaussian, run_lorenz96
from hint.hierarchical import build_hint
from hint.numerics import MobiusParams, mobius_forward, mobius_inverse
from hint.transport import ForwardProblem, LossSpec, loss_case1, loss_case2, loss_case3, train
from hint.verify import conformality_error

from _oracles import lu_logabsdet, num_jacobian, param_fd, rel_err


@pytest.fixture
def report(capsys):
    def emit(criterion, title, passed, detail, seconds):
        line = f"{'PASS' if passed else 'FAIL'} [{criterion}] {title}: {detail} ({seconds:.1f}s)"
        with capsys.disabled():
            print("\n" + line)
        assert passed, line

    return emit


def random_map(rng, max_dim=16):
    """A flat INN or a HINT map with random shape, mixing and normalizer."""
    if rng.random() < 0.5:
        d = int(rng.integers(2, max_dim + 1))
        mixing = "mobius" if rng.random() < 0.3 else "householder"
        norm = DiagonalAffine(rng.standard_normal(d), rng.uniform(0.5, 2.0, d)) if rng.random() < 0.5 else None
        return build_inn(d, int(rng.integers(1, 5)), rng, normalizer=norm, mixing=mixing,
                         hidden=[int(rng.integers(4, 17))], final_scale=0.5)
    total = int(rng.integers(2, max_dim + 1))
    m = int(rng.integers(1, total))
    return build_hint(m, total - m, int(rng.integers(1, 5)), int(rng.integers(1, 4)), rng,
                      kr=bool(rng.random() < 0.7), hidden=[int(rng.integers(4, 17))], final_scale=0.5)


def test_c01_invertibility(report):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        tmap = random_map(rng)
        u = rng.standard_normal((1000, tmap.dim))
        worst = max(worst, float(np.max(np.abs(tmap.inverse(tmap.forward(u)[0]) - u))))
    dt = time.perf_counter() - t0
    report(1, "invertibility, 20 architectures x 1000 points", worst < 1e-9 and dt < 30,
           f"max |S(T(u)) - u| = {worst:.2e} (tol 1e-9)", dt)


def test_c02_logdet_vs_finite_differences(report):
    rng = np.random.default_rng(102)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        tmap = random_map(rng, max_dim=12)
        u = rng.standard_normal(tmap.dim)
        _, ld, _ = tmap.forward(u)
        ref = lu_logabsdet(num_jacobian(lambda x: tmap.forward(x)[0], u))
        worst = max(worst, abs(ld - ref) / max(1.0, abs(ref)))
    dt = time.perf_counter() - t0
    report(2, "log-det vs finite-difference Jacobian, 50 cases", worst < 1e-5 and dt < 60,
           f"max relative error = {worst:.2e} (tol 1e-5)", dt)


def _grad_error(loss_fn, tmap, rng):
    _, grads = loss_fn()
    fd, idx = param_fd(lambda: loss_fn()[0], tmap.params, max_entries=40, rng=rng)
    return rel_err(grads, fd, idx)


def test_c03_gradients(report):
    rng = np.random.default_rng(103)
    t0 = time.perf_counter()
    errs = {"case1": 0.0, "case2": 0.0, "case3": 0.0}
    for _ in range(5):
        d = int(rng.integers(2, 6))
        m = int(rng.integers(1, d))
        B = rng.standard_normal((d, d))
        lg = LinearGaussian(rng.standard_normal((m, d)), float(rng.uniform(0.3, 1.0)), rng.standard_normal(d),
                            0.3 * B @ B.T + 0.5 * np.eye(d))
        p = lg.forward_problem()
        tmap = build_inn(d, int(rng.integers(1, 4)), rng, hidden=[6], final_scale=0.5)
        x = p.prior_sampler(rng, 8)
        fx = p.forward(x)
        errs["case1"] = max(errs["case1"], _grad_error(lambda: loss_case1(tmap, x, p, fx=fx), tmap, rng))

        A = rng.standard_normal((m, d))
        nl = ForwardProblem(lambda r, n: r.standard_normal((n, d)), lambda X, A=A: np.sin(X) @ A.T, 0.5, d, m,
                            F_grad=lambda X, A=A: A[None, :, :] * np.cos(X)[:, None, :],
                            prior_logpdf=lambda X: -0.5 * np.sum(X * X, axis=1), prior_logpdf_grad=lambda X: -X)
        tmap = build_inn(d, 2, rng, hidden=[6], final_scale=0.5)
        z = rng.standard_normal((8, d))
        y = rng.standard_normal(m)
        errs["case2"] = max(errs["case2"], _grad_error(lambda: loss_case2(tmap, z, nl, y), tmap, rng))

        tmap = build_hint(m, d, 2, int(rng.integers(1, 4)), rng, hidden=[6], final_scale=0.5)
        w = rng.standard_normal((8, m + d))
        errs["case3"] = max(errs["case3"], _grad_error(lambda: loss_case3(tmap, w), tmap, rng))
    dt = time.perf_counter() - t0
    worst = max(errs.values())
    detail = ", ".join(f"{k} {v:.2e}" for k, v in errs.items())
    report(3, "parameter gradients vs central differences, 5 configs per loss", worst < 1e-4 and dt < 120,
           f"max relative error {detail} (tol 1e-4)", dt)


def test_c04_triangular_structure(report):
    rng = np.random.default_rng(104)
    t0 = time.perf_counter()
    block, diff = 0.0, 0.0
    for _ in range(10):
        m, d = int(rng.integers(1, 5)), int(rng.integers(1, 6))
        norm = DiagonalAffine(rng.standard_normal(m + d), rng.uniform(0.5, 2.0, m + d))
        tmap = build_hint(m, d, int(rng.integers(1, 5)), int(rng.integers(1, 4)), rng, normalizer=norm,
                          final_scale=0.5)
        w = rng.standard_normal(m + d)
        J = num_jacobian(lambda v: tmap.forward(v)[0], w)
        block = max(block, float(np.max(np.abs(J[:m, m:]))))
        W = rng.standard_normal((200, m + d))
        diff = max(diff, float(np.max(np.abs(tmap.marginal_forward_y(W[:, :m]) - tmap.forward(W)[0][:, :m]))))
    dt = time.perf_counter() - t0
    report(4, "KR structure", block <= 1e-12 and diff <= 1e-12,
           f"max |dT^y/dx| = {block:.1e}, marginal vs full y-block = {diff:.1e} (tol 1e-12)", dt)


@pytest.mark.slow
def test_c05_conjugate_gaussian_hint(report):
    t0 = time.perf_counter()
    r = run_linear_gaussian(np.random.default_rng(0), "hint")
    dt = time.perf_counter() - t0
    report("5a", "conjugate-Gaussian recovery, joint regime (d=2, m=2)",
           r["mean_error"] < 0.05 and r["cov_error"] < 0.10 and dt < 300,
           f"mean err {r['mean_error']:.4f} (tol 0.05), cov err {r['cov_error']:.4f} (tol 0.10)", dt)


@pytest.mark.slow
def test_c05_conjugate_gaussian_case1(report):
    t0 = time.perf_counter()
    r = run_linear_gaussian(np.random.default_rng(0), "case1")
    dt = time.perf_counter() - t0
    report("5b", "conjugate-Gaussian recovery, prior-to-likelihood regime (d=3, m=1)",
           r["mean_error"] < 0.05 and r["cov_error"] < 0.10 and dt < 300,
           f"mean err {r['mean_error']:.4f} (tol 0.05), cov err {r['cov_error']:.4f} (tol 0.10)", dt)


def test_c06_offline_contract(report):
    rng = np.random.default_rng(106)
    t0 = time.perf_counter()
    lg = LinearGaussian([[1.0, 0.5, -0.4]], 0.3, [0.0, 0.0, 0.0], np.eye(3))
    counts = {}
    for case, builder in [("case1", lambda: build_inn(3, 2, rng, hidden=[6])),
                          ("hint", lambda: build_hint(1, 3, 2, 1, rng, hidden=[6]))]:
        for epochs in (1, 3):
            p = lg.forward_problem()
            train(builder(), LossSpec(case, batch_size=32), p, epochs, 200, rng, lr=1e-3)
            counts[(case, epochs)] = p.n_forward_evals
    offline_ok = all(v == 200 for v in counts.values())
    online = {}
    for epochs in (1, 3):
        p = lg.forward_problem()
        rep = train(build_inn(3, 2, rng, hidden=[6]), LossSpec("case2", batch_size=32, observed_y=[0.2]), p,
                    epochs, 200, rng, lr=1e-3)
        online[epochs] = (p.n_forward_evals, p.n_forward_calls, rep.steps)
    online_ok = all(evals == 200 * e and calls == steps for e, (evals, calls, steps) in online.items())
    dt = time.perf_counter() - t0
    detail = (f"offline F evals {sorted(set(counts.values()))} for N=200 over 1 and 3 epochs; "
              f"online evals/calls/steps {online}")
    report(6, "offline contract", offline_ok and online_ok, detail, dt)


@pytest.mark.slow
def test_c07_sequential_vs_kalman(report):
    t0 = time.perf_counter()
    r = run_linear_filter(np.random.default_rng(0))
    dt = time.perf_counter() - t0
    me = max(s["mean_error"] for s in r["steps"])
    te = max(s["trace_rel_error"] for s in r["steps"])
    report(7, "5-step filter vs Kalman", len(r["steps"]) == 5 and me < 0.1 and te < 0.2 and dt < 600,
           f"worst step mean err {me:.4f} (tol 0.1), trace rel err {te:.4f} (tol 0.2)", dt)


@pytest.mark.slow
def test_c08_clv(report):
    t0 = time.perf_counter()
    r = run_clv(np.random.default_rng(0))
    dt = time.perf_counter() - t0
    sm = np.asarray(r["smoothed_losses"])
    decreasing = bool(np.all(np.diff(sm) < 0))
    drop = 1.0 - r["mse"][-1] / r["mse"][0]
    report(8, "CLV one-step assimilation", len(r["losses"]) == 30 and decreasing and drop >= 0.5 and dt < 900,
           f"smoothed loss strictly decreasing: {decreasing}; trace-MSE {r['mse'][0]:.2e} -> {r['mse'][-1]:.2e} "
           f"(drop {drop:.0%}, need >= 50%)", dt)


@pytest.mark.slow
def test_c09_lorenz96(report):
    t0 = time.perf_counter()
    r = run_lorenz96(np.random.default_rng(0))
    dt = time.perf_counter() - t0
    finite = bool(np.all(np.isfinite(r["losses"])))
    ratio = r["final_loss"] / r["baseline_loss"]
    report(9, "Lorenz96 with log-Rosenbrock observation", len(r["losses"]) == 30 and finite and ratio <= 0.8
           and dt < 900, f"final loss {r['final_loss']:.3f} vs identity baseline {r['baseline_loss']:.3f} "
           f"(ratio {ratio:.3f}, need <= 0.8)", dt)


@pytest.mark.slow
def test_c10_convergence_soft_gate(report, capsys):
    t0 = time.perf_counter()
    problem = LinearGaussian([[0.8]], 0.5, [0.3], [[1.0]]).forward_problem()
    table = convergence_study(problem, MapConfig(steps=300, lr=1e-2), [500, 2000, 8000], replicates=8,
                              rng=np.random.default_rng(0))
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        in_band = check_slope(table)
    dt = time.perf_counter() - t0
    stds = ", ".join(f"N={r.n}: {r.probe_std:.3e}" for r in table.rows)
    line = (f"{'PASS' if in_band else 'FAIL (soft)'} [10] convergence slope: {table.slope:.3f} "
            f"in [-0.8, -0.2]; {stds} ({dt:.1f}s)")
    with capsys.disabled():
        print("\n" + line)
    # soft gate: an out-of-band slope is reported, not fatal; the study itself must complete
    assert all(r.replicates_ok == 8 for r in table.rows) and table.slope is not None


def test_c11_mobius(report):
    rng = np.random.default_rng(111)
    t0 = time.perf_counter()
    conf, trip = 0.0, 0.0
    for gamma in (0, 2):
        for _ in range(20):
            dim = int(rng.integers(2, 9))
            p = MobiusParams.near_isometry(dim, rng, gamma=gamma)
            u = rng.standard_normal(dim)
            conf = max(conf, conformality_error(p, u))
            trip = max(trip, float(np.max(np.abs(mobius_inverse(p, mobius_forward(p, u)[0]) - u))))
    dt = time.perf_counter() - t0
    report(11, "Moebius block, gamma in {0, 2}, 20 points each", conf <= 1e-5 and trip <= 1e-10,
           f"conformality err {conf:.2e} (tol 1e-5), round trip {trip:.2e} (tol 1e-10)", dt)
