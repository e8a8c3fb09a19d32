"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class ConvergenceError(RuntimeError):
    """An iterative method stopped before reaching its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class PieceOverflowError(RuntimeError):
    """A piecewise-affine function exceeded the configured piece cap."""

    def __init__(self, message, pieces=None):
        super().__init__(message)
        self.pieces = pieces


class ToleranceUnreachable(RuntimeError):
    """The requested tolerance cannot be certified within the resource caps."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class NumericalRefusal(RuntimeError):
    """A backend declines a parameter point where its error control breaks down."""
