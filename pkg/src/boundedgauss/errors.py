"""Exception types raised across the package."""


class ParameterError(ValueError):
    """An argument is outside the admissible range (sigma <= 0, alpha <= 1, ...)."""


class DomainError(ValueError):
    """A special function was evaluated outside its domain."""


class ShapeError(ParameterError):
    """Array shapes or grids that must agree do not."""


class PreconditionError(ValueError):
    """Input data violates an operation precondition (e.g. an unclipped batch)."""


class ConsistencyError(ArithmeticError):
    """A computed quantity violates an internal invariant beyond roundoff."""


class ConvergenceError(ArithmeticError):
    """Numerical integration did not reach the requested tolerance.

    Attributes:
        estimate: Best available value of the integral.
        error_bound: Error estimate attached to `estimate`.
    """

    def __init__(self, message, estimate=float('nan'), error_bound=float('inf')):
        super().__init__(message)
        self.estimate = estimate
        self.error_bound = error_bound
