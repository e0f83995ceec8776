"""Empirical rate of the transport-map estimator as the training set grows.

For each training-set size N, ``replicates`` maps are trained from the same
initial parameters on independent N-sample training sets. The spread of
T(u; theta_hat) at fixed probe points across replicates is then regressed
on N in log-log space. Under idealised assumptions the slope is -1/2; with
over-parameterised nets this is only a diagnostic, so the band check
returns a warning rather than raising.
"""
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .hierarchical import build_hint
from .transport import Case, LossSpec, make_training_set, train

log = logging.getLogger(__name__)

SLOPE_BAND = (-0.8, -0.2)


@dataclass
class MapConfig:
    n_layers: int = 2
    depth: int = 1
    hidden: list = field(default_factory=lambda: [8, 8])
    clamp: float = 2.0
    steps: int = 300
    lr: float = 1e-2
    init_seed: int = 1234


@dataclass
class ConvergenceRow:
    n: int
    probe_std: float
    replicates_ok: int
    replicates_failed: int
    errors: list = field(default_factory=list)


@dataclass
class ConvergenceTable:
    rows: list
    slope: float = None
    intercept: float = None

    def in_band(self, band=SLOPE_BAND):
        return self.slope is not None and band[0] <= self.slope <= band[1]

    def as_rows(self):
        return [{"n": r.n, "replicates_ok": r.replicates_ok, "replicates_failed": r.replicates_failed,
                 "probe_std": r.probe_std} for r in self.rows]


def _fit_one(problem, cfg, n, data_seed, probe_points):
    """Full-batch training from the shared initial parameters; returns T at the probes."""
    tmap = build_hint(problem.dim_y, problem.dim_x, cfg.n_layers, cfg.depth,
                      np.random.default_rng(cfg.init_seed), hidden=list(cfg.hidden), clamp=cfg.clamp)
    rng = np.random.default_rng(data_seed)
    spec = LossSpec(Case.JOINT_TO_LATENT, batch_size=n)
    data = make_training_set(spec, problem, n, rng)
    train(tmap, spec, None, cfg.steps, n, rng, lr=cfg.lr, data=data)
    out, _, _ = tmap.forward(probe_points)
    return out


def _run(args):
    problem, cfg, n, seed, probes = args
    try:
        return _fit_one(problem, cfg, n, seed, probes), None
    except Exception as exc:  # a failed replicate is recorded and skipped
        return None, f"{type(exc).__name__}: {exc}"


def fit_slope(ns, stds):
    ns, stds = np.asarray(ns, dtype=np.float64), np.asarray(stds, dtype=np.float64)
    ok = np.isfinite(stds) & (stds > 0)
    if ok.sum() < 2:
        return None, None
    slope, intercept = np.polyfit(np.log(ns[ok]), np.log(stds[ok]), 1)
    return float(slope), float(intercept)


def convergence_study(problem, map_config, n_list, replicates=8, probe_points=None, rng=None,
                      seeds=None, workers=1):
    """Train ``replicates`` maps per training-set size and report the probe-point spread.

    ``seeds`` overrides the per-replicate data seeds (one list per call, reused
    for every N); otherwise independent seeds are spawned from ``rng``. With
    ``workers > 1`` replicates train in separate processes, which requires a
    picklable ``problem``.
    """
    n_list = [int(n) for n in n_list]
    if not n_list or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be nonempty and strictly increasing")
    if replicates < 8:
        raise ValueError("need at least 8 replicates")
    cfg = map_config if isinstance(map_config, MapConfig) else MapConfig(**(map_config or {}))
    rng = rng if rng is not None else np.random.default_rng()
    if probe_points is None:
        probe_points = np.random.default_rng(cfg.init_seed + 1).standard_normal((16, problem.dim_y + problem.dim_x))
    probe_points = np.atleast_2d(np.asarray(probe_points, dtype=np.float64))
    if seeds is not None and len(seeds) != replicates:
        raise ValueError("seeds must have one entry per replicate")
    rows = []
    for n in n_list:
        rep_seeds = list(seeds) if seeds is not None else [int(s) for s in rng.integers(0, 2**63, size=replicates)]
        jobs = [(problem, cfg, n, s, probe_points) for s in rep_seeds]
        if workers > 1:
            with ProcessPoolExecutor(workers) as ex:
                results = list(ex.map(_run, jobs))
        else:
            results = [_run(j) for j in jobs]
        outs = [o for o, _ in results if o is not None]
        errs = [e for _, e in results if e is not None]
        for e in errs:
            log.warning("N=%d replicate failed: %s", n, e)
        if len(outs) >= 2:
            # shift by one replicate so bit-identical replicates give exactly zero
            stack = np.stack(outs)
            std = float(np.mean(np.std(stack - stack[0], axis=0, ddof=1)))
        else:
            std = float("nan")
        rows.append(ConvergenceRow(n, std, len(outs), len(errs), errs))
    slope, intercept = fit_slope([r.n for r in rows], [r.probe_std for r in rows]) if len(rows) > 1 else (None, None)
    return ConvergenceTable(rows, slope, intercept)


def check_slope(table, band=SLOPE_BAND):
    """Soft gate: True inside the band, otherwise a warning and False."""
    if table.slope is None:
        return True
    if table.in_band(band):
        return True
    warnings.warn(f"empirical convergence slope {table.slope:.3f} outside [{band[0]}, {band[1]}]", RuntimeWarning)
    return False
