"""Multilevel Monte Carlo for rough differential equations driven by fractional Brownian motion."""

from .errors import ConfigError, DomainError, InfeasiblePlan, NumericalFailure, RoughMlmcError

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DomainError",
    "InfeasiblePlan",
    "NumericalFailure",
    "RoughMlmcError",
    "__version__",
]
