"""Kronecker-structured dictionary identifiability with desk-scale numerical verification."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .config import ConfigError, ExperimentConfig
from .dictionary import CoordinateDictionary, sphere_perturbation
from .generative import GenerativeModel, ObservationBatch, SeparableSupport, make_rng, synthesize
from .objective import analytic_gap_expectation, conditional_minimizer, lasso_batch, phi_value
from .theory import TheoremReport, check_theorem1

__all__ = [
    "__version__",
    "BACKEND",
    "ConfigError",
    "ExperimentConfig",
    "CoordinateDictionary",
    "sphere_perturbation",
    "GenerativeModel",
    "ObservationBatch",
    "SeparableSupport",
    "make_rng",
    "synthesize",
    "analytic_gap_expectation",
    "conditional_minimizer",
    "lasso_batch",
    "phi_value",
    "TheoremReport",
    "check_theorem1",
]
