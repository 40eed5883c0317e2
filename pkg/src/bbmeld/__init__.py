"""Bayesian melding of dead-reckoned paths with sparse GPS fixes."""
from ._backend import BACKEND
from .errors import (
    ConvergenceError,
    IndefiniteHessianError,
    MeldError,
    NumericalError,
    SingularMatrixError,
    ValidationError,
)
from .timeline import (
    BiasBasis,
    GpsSeries,
    PosteriorTrack,
    TimeGrid,
    Track1D,
    VarianceParams,
    credible_band,
    validate_inputs,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BiasBasis",
    "ConvergenceError",
    "GpsSeries",
    "IndefiniteHessianError",
    "MeldError",
    "NumericalError",
    "PosteriorTrack",
    "SingularMatrixError",
    "TimeGrid",
    "Track1D",
    "ValidationError",
    "VarianceParams",
    "credible_band",
    "validate_inputs",
]
