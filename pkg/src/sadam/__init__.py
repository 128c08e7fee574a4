"""Softplus-calibrated adaptive gradient methods and their benchmark harness."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .calibrators import ALRBounds, Calibrator, alr_bounds, denominator
from .errors import (
    ConfigError,
    DivergedRunError,
    InputDomainError,
    PoisonedStateError,
    SadamError,
    UnboundedALRError,
    UnsupportedQueryError,
)
from .harness import ExperimentConfig, RateStudy, compare, grid_search, rate_study, run
from .instrument import ALRSnapshot, TrajectoryRecord, bound_violations, snapshot_alr, z_residual
from .numerics import loglog_slope, percentile_nearest_rank, softplus_stable
from .optim import METHODS, HyperParams, Method, OptimizerState, default_hyperparams, init, step
from .problems import MLP, Logistic, Oracle, Quadratic, Rosenbrock

__version__ = "0.1.0"

__all__ = [
    "ALRBounds", "ALRSnapshot", "Calibrator", "ConfigError", "DivergedRunError",
    "ExperimentConfig", "HyperParams", "InputDomainError", "KERNEL_BACKEND",
    "Logistic", "METHODS", "MLP", "Method", "OptimizerState", "Oracle",
    "PoisonedStateError", "Quadratic", "RateStudy", "Rosenbrock", "SadamError",
    "TrajectoryRecord", "UnboundedALRError", "UnsupportedQueryError",
    "alr_bounds", "bound_violations", "compare", "default_hyperparams",
    "denominator", "grid_search", "init", "loglog_slope",
    "percentile_nearest_rank", "rate_study", "run", "snapshot_alr",
    "softplus_stable", "step", "z_residual",
]
