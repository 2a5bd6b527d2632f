"""Bayesian nested clustering of multiple zero-inflated count processes.

Counts are modelled per process by a hurdle distribution (point mass at
zero, shifted Negative Binomial above) whose parameters follow an enriched
finite mixture with a random number of components at two levels: subjects
are clustered by their zero/non-zero patterns (outer level) and, within
each outer cluster, by the distribution of their positive counts (inner
level). Inference runs through either a conditional sampler over the full
parameter state or a marginal sampler over allocations only.
"""

from .data import CountDataset, ZeroIndicators, as_count_array, compute_zero_indicators
from .errors import DataFormatError, NumericError
from .estimator import NestedHurdleClustering
from .hyperparams import Hyperparams
from .kernels import (
    ComponentParams,
    HurdleParams,
    log_hurdle_pmf,
    log_shifted_nb_pmf,
    subject_component_loglik,
)
from .marglik import log_marg_bern, log_marg_nb
from .summaries import (
    CoClusteringMatrix,
    NestedPartition,
    binder_estimate,
    cluster_count_posterior,
    cluster_pmf_estimate,
    coclustering,
)
from .synthetic import GroundTruth, generate, standard_scenarios
from .trace import ChainTrace

__version__ = "0.1.0"

__all__ = [
    "ChainTrace",
    "CoClusteringMatrix",
    "ComponentParams",
    "CountDataset",
    "DataFormatError",
    "GroundTruth",
    "HurdleParams",
    "Hyperparams",
    "NestedHurdleClustering",
    "NestedPartition",
    "NumericError",
    "ZeroIndicators",
    "as_count_array",
    "binder_estimate",
    "cluster_count_posterior",
    "cluster_pmf_estimate",
    "coclustering",
    "compute_zero_indicators",
    "generate",
    "log_hurdle_pmf",
    "log_marg_bern",
    "log_marg_nb",
    "log_shifted_nb_pmf",
    "standard_scenarios",
    "subject_component_loglik",
    "__version__",
]
