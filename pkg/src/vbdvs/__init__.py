"""Variational Bayes dynamic variable selection for TVP regressions."""

from .errors import InvalidArgumentError, NumericalFailureError
from .statespace import RegressionData, SystemSequences, StateMoments
from .estimator import FitOptions, FitResult, PriorConfig, PRESETS, fit_simple_tvp, fit_vbdvs

__version__ = "0.1.0"

__all__ = [
    "InvalidArgumentError",
    "NumericalFailureError",
    "RegressionData",
    "SystemSequences",
    "StateMoments",
    "FitOptions",
    "FitResult",
    "PriorConfig",
    "PRESETS",
    "fit_simple_tvp",
    "fit_vbdvs",
]
