"""Exception hierarchy shared by all modules."""


class FusedRidgeError(Exception):
    """Base class for package errors."""


class InputError(FusedRidgeError, ValueError):
    """Malformed input: wrong shapes, non-finite entries, parse failures."""


class DomainError(FusedRidgeError, ValueError):
    """Input outside the mathematical domain (e.g. not positive definite)."""


class PenaltyError(FusedRidgeError, ValueError):
    """Invalid penalty matrix or penalty template."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class ConvergenceError(FusedRidgeError, RuntimeError):
    """Iterative solver did not reach its tolerance.

    Carries the last iterate and its KKT residuals for inspection.
    """

    def __init__(self, message, last_iterate=None, residuals=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residuals = residuals


class FoldError(FusedRidgeError, ValueError):
    """Cross-validation fold leaves a class without training samples."""


class RegressionError(FusedRidgeError, ValueError):
    """Node regression for a graph-built target failed."""


class EnumerationError(FusedRidgeError, RuntimeError):
    """Path enumeration exceeded its size guard."""
