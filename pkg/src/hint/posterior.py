"""Posterior samplers built on trained transport maps."""
from dataclasses import dataclass, field

import numpy as np


@dataclass
class PosteriorSampleSet:
    samples: np.ndarray
    case: str
    y: np.ndarray = None
    checkpoint_id: str = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.samples.shape[0] == 0:
            raise ValueError("a sample set must be nonempty")

    @property
    def dim(self):
        return self.samples.shape[1]

    def provenance(self):
        return {
            "case": self.case,
            "checkpoint_id": self.checkpoint_id,
            "y": None if self.y is None else np.asarray(self.y).tolist(),
            "n_samples": int(self.samples.shape[0]),
            "dim": int(self.dim),
            **self.extra,
        }


def sample_posterior_case1(tmap, y, n_out, rng, checkpoint_id=None):
    """x = T^{-1}([y, z]) with z ~ N(0, I_{d-m})."""
    y = np.asarray(y, dtype=np.float64).ravel()
    m = y.shape[0]
    if m >= tmap.dim:
        raise ValueError(f"observation has {m} entries, map acts on {tmap.dim}")
    z = rng.standard_normal((n_out, tmap.dim - m))
    v = np.concatenate([np.broadcast_to(y, (n_out, m)), z], axis=1)
    return PosteriorSampleSet(tmap.inverse(v), "case1", y=y, checkpoint_id=checkpoint_id)


def sample_posterior_case2(tmap, n, rng, y=None, checkpoint_id=None):
    """x = T(z) with z ~ N(0, I_d); the map was trained for one observation."""
    z = rng.standard_normal((n, tmap.dim))
    x, _, _ = tmap.forward(z)
    return PosteriorSampleSet(x, "case2", y=y, checkpoint_id=checkpoint_id)


def sample_posterior_hint(tmap, y, n_out, rng, checkpoint_id=None):
    """Fix z_y = T^y(y), draw z_x ~ N(0, I_d), return the x-block of T^{-1}([z_y, z_x])."""
    if not getattr(tmap, "kr_enforced", False):
        raise ValueError("HINT sampling requires a KR-enforced map")
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] != tmap.dim_y:
        raise ValueError(f"observation has {y.shape[0]} entries, expected {tmap.dim_y}")
    zy = tmap.marginal_forward_y(y)
    zx = rng.standard_normal((n_out, tmap.dim_x))
    z = np.concatenate([np.broadcast_to(zy, (n_out, tmap.dim_y)), zx], axis=1)
    w = tmap.inverse(z)
    return PosteriorSampleSet(w[:, tmap.dim_y:], "case3", y=y, checkpoint_id=checkpoint_id)


def sample_joint_from_map(tmap, n, rng):
    """Push a full standard-normal latent through T^{-1}: draws from the learned joint."""
    return tmap.inverse(rng.standard_normal((n, tmap.dim)))
