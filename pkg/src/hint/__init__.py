"""Hierarchical invertible neural transport for Bayesian inference.

Affine coupling maps, their hierarchical (block-triangular) generalisation,
KL-based training on Monte Carlo samples, posterior sampling and a sample-based
sequential filter.
"""
from .checkpoint import CheckpointError, checkpoint_load, checkpoint_save
from .coupling import CouplingLayer, DiagonalAffine, InnMap, build_inn, make_coupling_layer
from .hierarchical import HintMap, SplitNode, SplitTree, build_hint, build_split_tree
from .mlp import DenseNet, mlp_init
from .numerics import HouseholderStack, MobiusParams, SingularityError
from .oracles import GaussianPosterior, kalman_filter, linear_gaussian_posterior
from .posterior import PosteriorSampleSet, sample_posterior_case1, sample_posterior_case2, sample_posterior_hint
from .sequential import FilterConfig, FilterState, assimilate, filter_run, predict
from .transport import AdamState, Case, ForwardProblem, LossSpec, NumericalError, train

__version__ = "0.1.0"

__all__ = [
    "AdamState", "Case", "CheckpointError", "CouplingLayer", "DenseNet", "DiagonalAffine", "FilterConfig",
    "FilterState", "ForwardProblem", "GaussianPosterior", "HintMap", "HouseholderStack", "InnMap", "LossSpec",
    "MobiusParams", "NumericalError", "PosteriorSampleSet", "SingularityError", "SplitNode", "SplitTree",
    "assimilate", "build_hint", "build_inn", "build_split_tree", "checkpoint_load", "checkpoint_save",
    "filter_run", "kalman_filter", "linear_gaussian_posterior", "make_coupling_layer", "mlp_init", "predict",
    "sample_posterior_case1", "sample_posterior_case2", "sample_posterior_hint", "train",
]
