"""Sequential inference: alternate ensemble prediction and HINT assimilation.

Only samples of the predictive distribution are ever used; no density of the
prior or of the transition kernel is evaluated anywhere on this path.
"""
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .coupling import DiagonalAffine
from .hierarchical import build_hint
from .posterior import sample_posterior_hint
from .transport import Case, LossSpec, train

log = logging.getLogger(__name__)


@dataclass
class FilterConfig:
    n_particles: int = 10_000
    train_set_size: int = 10_000
    epochs: int = 40
    warm_fraction: float = 0.2
    warm_start: bool = True
    batch_size: int = 256
    lr: float = 1e-3
    lr_decay: float = 1.0
    n_layers: int = 4
    depth: int = 2
    hidden: list = None
    clamp: float = 2.0
    standardize: bool = True

    def epochs_for_step(self, t):
        if t <= 1 or not self.warm_start:
            return self.epochs
        return max(1, int(round(self.warm_fraction * self.epochs)))


@dataclass
class FilterState:
    t: int
    posterior_samples: np.ndarray
    tmap: object = None
    map_params: list = None
    metrics: dict = field(default_factory=dict)


class FilterStepError(RuntimeError):
    def __init__(self, step, cause):
        super().__init__(f"filter step {step} failed: {cause}")
        self.step = step


def predict(state, problem, rng, n=None):
    """Propagate posterior particles: x_t = M(x_{t-1}) + sigma_x eta.

    With ``n`` larger than the ensemble, particles are resampled with
    replacement first, each receiving fresh transition noise.
    """
    X = np.atleast_2d(state.posterior_samples)
    if X.shape[0] == 0:
        raise ValueError("no posterior samples to propagate")
    if n is not None and n != X.shape[0]:
        X = X[rng.integers(0, X.shape[0], size=n)]
    out = np.asarray(problem.M(X), dtype=np.float64)
    if problem.sigma_x > 0:
        out = out + problem.sigma_x * rng.standard_normal(out.shape)
    if problem.clip_min is not None:
        out = np.maximum(out, problem.clip_min)
    return out


def _new_map(problem, cfg, rng):
    return build_hint(problem.dim_y, problem.dim_x, cfg.n_layers, cfg.depth, rng,
                      hidden=cfg.hidden, clamp=cfg.clamp, final_scale=0.0)


def assimilate(state, problem, y_t, cfg, rng, predicted=None, callback=None):
    """Train on joint pairs [F(x_t) + sigma_y xi, x_t] and condition on ``y_t``.

    ``callback(epoch, loss, tmap)`` runs after every training epoch.
    """
    t = state.t + 1
    t0 = time.perf_counter()
    x_t = predict(state, problem, rng, n=cfg.train_set_size) if predicted is None else predicted
    y_sim = np.asarray(problem.F(x_t), dtype=np.float64)
    w = np.concatenate([y_sim + problem.sigma_y * rng.standard_normal(y_sim.shape), x_t], axis=1)

    tmap = state.tmap if (cfg.warm_start and state.tmap is not None) else _new_map(problem, cfg, rng)
    if cfg.standardize:
        tmap.normalizer = DiagonalAffine.fit(w)
    spec = LossSpec(Case.SEQUENTIAL, batch_size=cfg.batch_size)
    epochs = cfg.epochs_for_step(t)
    # fresh Adam moments every step; only the parameters carry over
    cb = None if callback is None else (lambda e, loss: callback(e, loss, tmap))
    report = train(tmap, spec, None, epochs, w.shape[0], rng, lr=cfg.lr, lr_decay=cfg.lr_decay,
                   data=w, callback=cb)
    post = sample_posterior_hint(tmap, y_t, cfg.n_particles, rng).samples
    mean = post.mean(axis=0)
    cov = np.cov(post, rowvar=False)
    metrics = {
        "step": t,
        "mean": mean,
        "cov_trace": float(np.trace(np.atleast_2d(cov))),
        "cov": np.atleast_2d(cov),
        "final_loss": report.losses[-1] if report.losses else float("nan"),
        "epochs": epochs,
        "wall_time": time.perf_counter() - t0,
        "losses": list(report.losses),
    }
    return FilterState(t, post, tmap, [p.copy() for p in tmap.params], metrics)


def filter_run(problem, observations, init_prior_sampler, cfg, rng, callback=None):
    """Run predict/assimilate over every observation; returns one state per step."""
    observations = list(observations)
    if not observations:
        raise ValueError("need at least one observation")
    state = FilterState(0, init_prior_sampler(rng, cfg.n_particles))
    states = []
    for i, y in enumerate(observations):
        try:
            state = assimilate(state, problem, y, cfg, rng)
        except Exception as exc:
            raise FilterStepError(i + 1, exc) from exc
        log.info("step %d: trace %.5g, loss %.5g", state.t, state.metrics["cov_trace"], state.metrics["final_loss"])
        if callback is not None:
            callback(state)
        states.append(state)
    return states
