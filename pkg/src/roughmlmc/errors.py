"""Exception classes shared by all modules.

The CLI maps each class to a distinct exit code.
"""


class RoughMlmcError(Exception):
    """Base class for library errors."""


class DomainError(RoughMlmcError, ValueError):
    """An argument lies outside the domain of an operation."""


class NumericalFailure(RoughMlmcError, ArithmeticError):
    """A computation lost too much precision to be trusted."""


class InfeasiblePlan(RoughMlmcError):
    """No MLMC plan satisfies the requested error budget."""


class ConfigError(RoughMlmcError):
    """Invalid experiment configuration."""
