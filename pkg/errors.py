"""
Exception types shared by the causdiff modules
"""


class CausDiffError(Exception):
    """Base class for every error raised by causdiff."""


class DomainError(CausDiffError, ValueError):
    """Argument outside the domain of an operation (t <= 0, NaN, negative mass...)."""


class ConfigurationError(CausDiffError, ValueError):
    """Inconsistent parameters: stencil radius mismatch, unstable dt, bad config keys."""


class ConvergenceError(CausDiffError):
    """A series did not reach its truncation tolerance.

    Args:
        message: Human readable description
        partial_value: Value accumulated before giving up
        terms: Number of terms summed
    """

    def __init__(self, message, partial_value=None, terms=None):
        super().__init__(message)
        self.partial_value = partial_value
        self.terms = terms


class StagnationError(CausDiffError):
    """Landweber residual lies in the numerical null space of the forward operator."""


class NumericalError(CausDiffError, ArithmeticError):
    """An internal numerical invariant was violated."""
