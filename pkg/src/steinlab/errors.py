"""Exception hierarchy.

Validation problems subclass ``ValueError`` so callers that only care about
bad input can keep catching the builtin.
"""


class SteinlabError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SteinlabError, ValueError):
    """An input violates a documented precondition or invariant."""


class ShapeMismatchError(ValidationError):
    """Two operands live on different tensor-product spaces."""


class DimensionCapError(ValidationError):
    def __init__(self, required: int, allowed: int, what: str = "total dimension"):
        self.required = required
        self.allowed = allowed
        super().__init__(
            f"{what} {required} exceeds the dimension cap {allowed} "
            "(set STEINLAB_DIM_CAP to raise it)"
        )


class SolverError(SteinlabError, RuntimeError):
    """A numerical solver did not return an optimal solution."""

    def __init__(self, message: str, status: str | None = None):
        self.status = status
        super().__init__(message if status is None else f"{message} (status: {status})")


class ConvergenceError(SteinlabError, RuntimeError):
    """An iterative method hit its iteration budget before certifying optimality."""

    def __init__(self, message: str, best_value: float, gap: float, iterations: int):
        self.best_value = best_value
        self.gap = gap
        self.iterations = iterations
        super().__init__(f"{message}: best value {best_value!r}, gap {gap!r} after {iterations} iterations")


class ModelError(SteinlabError):
    """The free-set model cannot answer the query (e.g. empty interior)."""


class NotInHullError(ValidationError):
    """The target operator is not a convex combination of the supplied states."""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (LP residual {residual:.3e})")


class InvariantViolation(SteinlabError, AssertionError):
    """A checked inequality or identity failed beyond its tolerance."""
