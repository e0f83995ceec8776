"""Wall-clock comparison of the numba and numpy kernel paths.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is called once beforehand so JIT compilation is excluded.
"""
import argparse
import time

import numpy as np

from hint import _kernels as K


def best_of(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    d = 4
    r = rng.normal(1.0, 0.3, d)
    alpha = rng.normal(1.0, 0.3, (d, d))
    U4 = 1.0 + 0.1 * rng.standard_normal((10_000, d))
    U40 = 1.0 + rng.standard_normal((10_000, 40))
    V = rng.standard_normal((8, 16))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    H = rng.standard_normal((10_000, 16))
    return [
        ("rk4 CLV (1e4 x 4, 100 steps)", lambda f: f(r, alpha, U4, 0.01, 100), K.rk4_clv_np, K.rk4_clv_nb),
        ("rk4 Lorenz96 (1e4 x 40, 10 steps)", lambda f: f(8.0, U40, 0.01, 10), K.rk4_lorenz96_np, K.rk4_lorenz96_nb),
        ("log-Rosenbrock (1e4 x 40)", lambda f: f(U40, 1e-12), K.log_rosenbrock_np, K.log_rosenbrock_nb),
        ("Householder x8 (1e4 x 16)", lambda f: f(V, H, False), K.householder_apply_np, K.householder_apply_nb),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        print("numba is not installed; only the numpy path is available")
    print(f"{'kernel':38s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}  max|diff|")
    for name, call, f_np, f_nb in cases(np.random.default_rng(0)):
        a, b = call(f_np), call(f_nb)
        a = a[0] if isinstance(a, tuple) else a
        b = b[0] if isinstance(b, tuple) else b
        t_np = best_of(lambda: call(f_np), args.repeat)
        t_nb = best_of(lambda: call(f_nb), args.repeat)
        print(f"{name:38s} {1e3 * t_np:11.2f} {1e3 * t_nb:11.2f} {t_np / t_nb:8.1f}  {np.max(np.abs(a - b)):.1e}")


if __name__ == "__main__":
    main()
