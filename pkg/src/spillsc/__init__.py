"""Bayesian synthetic control with distance-based shrinkage priors.

Estimates the causal effect of a one-unit intervention from panel data
while guarding against spillover onto nearby control units: donors close
to the treated unit (in space, in covariates, or a weighted mix) are either
shrunk harder (distance horseshoe) or excluded outright (distance
spike-and-slab) when building the synthetic control.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .counterfactual import CounterfactualDraws, EffectEstimate, effects, impute
from .distance import (
    WeightedDistances,
    covariate_dissimilarity,
    cutoff_from_exclusion_fraction,
    panel_distances,
    spatial_proximity,
    weighted_distance,
)
from .errors import ConfigError, NumericalError, SpillscError, ValidationError
from .mcmc import Diagnostics, McmcConfig, PosteriorDraws, diagnostics, fit, initialize
from .model import DHS, DS2, ModelState, PriorSpec, assign_components, log_likelihood, log_prior
from .panel import IngestionSettings, PanelData, StandardizationRecord, load_panel, standardize, trim_donors
from .replication import ReplicationPlan, SimMetrics, coverage, relative_bias, rmse
from .replication import run as run_replication
from .simgen import SimConfig, SimTruth, affected_fraction_to_rho_star, generate

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "__version__",
    "SpillscError", "ValidationError", "ConfigError", "NumericalError",
    "PanelData", "StandardizationRecord", "IngestionSettings",
    "load_panel", "standardize", "trim_donors",
    "WeightedDistances", "covariate_dissimilarity", "spatial_proximity",
    "weighted_distance", "cutoff_from_exclusion_fraction", "panel_distances",
    "DHS", "DS2", "PriorSpec", "ModelState",
    "assign_components", "log_likelihood", "log_prior",
    "McmcConfig", "PosteriorDraws", "Diagnostics", "initialize", "fit", "diagnostics",
    "CounterfactualDraws", "EffectEstimate", "impute", "effects",
    "SimConfig", "SimTruth", "generate", "affected_fraction_to_rho_star",
    "ReplicationPlan", "SimMetrics", "run_replication",
    "relative_bias", "rmse", "coverage",
]
