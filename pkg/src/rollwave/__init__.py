"""Spectral stability toolkit for roll waves of the viscous St. Venant equations."""

from .errors import (ConfigError, ContourError, DomainError, H1ViolationError, NoHopfPointError,
                     RollWaveError, SolverError, TrackingError)
from .model import ModelParams

__version__ = "0.1.0"

__all__ = [
    "ModelParams", "RollWaveError", "DomainError", "NoHopfPointError", "SolverError",
    "H1ViolationError", "TrackingError", "ContourError", "ConfigError",
]
