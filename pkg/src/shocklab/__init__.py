"""Traveling shock profiles of a lattice conservation law and its viscous continuum counterpart."""

from .errors import ConfigurationError, DomainError, InternalConsistencyError, NumericFailure, ShocklabError
from .flux import FluxFunction, degenerate_quadratic, load_flux, shipped_flux

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DomainError",
    "FluxFunction",
    "InternalConsistencyError",
    "NumericFailure",
    "ShocklabError",
    "degenerate_quadratic",
    "load_flux",
    "shipped_flux",
]
