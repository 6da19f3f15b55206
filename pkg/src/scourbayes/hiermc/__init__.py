"""Hierarchical (partially-pooled) Bayesian model of foundation stiffness."""
from .chains import (DivergenceWarning, PosteriorChains, SamplingError, fit_no_pooling,
                     run_chains, sample_nuts)
from .diagnostics import DiagnosticError, ess, split_rhat, summarize
from .model import HierarchicalModel, NoPoolingModel, ParameterVector, log_posterior
from .nuts import NUTS
from .priors import GammaPrior, HyperPriorConfig, default_priors

__all__ = [
    "DiagnosticError", "DivergenceWarning", "GammaPrior", "HierarchicalModel",
    "HyperPriorConfig", "NUTS", "NoPoolingModel", "ParameterVector", "PosteriorChains",
    "SamplingError", "default_priors", "ess", "fit_no_pooling", "log_posterior",
    "run_chains", "sample_nuts", "split_rhat", "summarize",
]
