"""Gaussian-process kernels for structural time-series models.

Closed-form covariance functions equivalent to local level, local linear
trend, cyclic and damped-trend state-space models, with exact GP regression,
Kalman filtering and smoothing, and marginal-likelihood fitting.
"""

from .errors import (CompositionError, DataError, GridError, NumericalFailure, OptimizationFailure,
                     ParameterDomainError, StsError, UnsupportedGridError)
from .gp import GPPosterior, posterior, sample_prior
from .io import TimeSeries, generate_synthetic, load_nile, read_csv
from .kernels import Moments
from .model import Component, Covariates, ModelSpec
from .optimize import FitResult, fit
from .oracle import exact_covariance
from .statespace import forecast, kalman_filter, rts_smoother

__version__ = "0.1.0"

__all__ = [
    "CompositionError", "DataError", "GridError", "NumericalFailure", "OptimizationFailure",
    "ParameterDomainError", "StsError", "UnsupportedGridError", "GPPosterior", "posterior", "sample_prior",
    "TimeSeries", "generate_synthetic", "load_nile", "read_csv", "Moments", "Component", "Covariates",
    "ModelSpec", "FitResult", "fit", "exact_covariance", "forecast", "kalman_filter", "rts_smoother",
]
