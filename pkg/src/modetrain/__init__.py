"""Mode-assisted unsupervised training of restricted Boltzmann machines."""

from .rbm import (
    Convention,
    DataDistribution,
    NodeState,
    RbmParams,
    conditional_hidden,
    conditional_visible,
    convert_convention,
    convert_state,
    energy,
    exact_log_likelihood,
    exact_partition,
    gibbs_step,
    load_checkpoint,
    save_checkpoint,
    unnormalized_marginal,
)

__all__ = [
    "Convention",
    "DataDistribution",
    "NodeState",
    "RbmParams",
    "conditional_hidden",
    "conditional_visible",
    "convert_convention",
    "convert_state",
    "energy",
    "exact_log_likelihood",
    "exact_partition",
    "gibbs_step",
    "load_checkpoint",
    "save_checkpoint",
    "unnormalized_marginal",
]

__version__ = "0.1.0"
