"""Asymptotic learning curves of regularized ERM in the Gaussian covariate model."""

from .curves import LearningCurve, run_sweep
from .errors import (
    ErrorReport,
    classification_error,
    evaluate_errors,
    mse_errors,
    training_loss_quadrature,
)
from .feature_models import (
    KappaConstants,
    Nonlinearity,
    RandomFeatureSpec,
    estimate_from_data,
    kappa_constants,
    kappa_from_function,
    kernel_diagonal_model,
    random_features_triple,
    vanilla_model,
)
from .model import (
    ConjugateOverlaps,
    CovarianceTriple,
    Loss,
    Metric,
    Overlaps,
    SolverOptions,
    SpectralModel,
    TaskSpec,
    Teacher,
    spectral_reduce,
)
from .state_evolution import StateEvolutionResult, solve

__all__ = [
    "ConjugateOverlaps",
    "CovarianceTriple",
    "ErrorReport",
    "KappaConstants",
    "LearningCurve",
    "Loss",
    "Metric",
    "Nonlinearity",
    "Overlaps",
    "RandomFeatureSpec",
    "SolverOptions",
    "SpectralModel",
    "StateEvolutionResult",
    "TaskSpec",
    "Teacher",
    "classification_error",
    "estimate_from_data",
    "evaluate_errors",
    "kappa_constants",
    "kappa_from_function",
    "kernel_diagonal_model",
    "mse_errors",
    "random_features_triple",
    "run_sweep",
    "solve",
    "spectral_reduce",
    "training_loss_quadrature",
    "vanilla_model",
]
