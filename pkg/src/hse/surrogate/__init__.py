"""Surrogate models: per-target polynomial regression and ordinary Kriging."""

from .kriging import ConditioningError, KrigingPredictor, search_theta
from .model import (KRIGING, POLYNOMIAL, Prediction, SpaceMismatchError, SurrogateConfig,
                    SurrogateModel, ValidationReport, cross_validate, fit, fit_kriging,
                    fit_polynomial, load_model, predict, save_model)
from .polynomial import FitError, RankDeficientError, SampleSizeError, ols

__all__ = [
    "ConditioningError", "FitError", "KRIGING", "KrigingPredictor", "POLYNOMIAL", "Prediction",
    "RankDeficientError", "SampleSizeError", "SpaceMismatchError", "SurrogateConfig",
    "SurrogateModel", "ValidationReport", "cross_validate", "fit", "fit_kriging",
    "fit_polynomial", "load_model", "ols", "predict", "save_model", "search_theta",
]
