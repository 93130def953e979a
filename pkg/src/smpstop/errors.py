"""Exception types raised by smpstop."""


class SmpStopError(Exception):
    """Base class for all package errors."""


class ModelError(SmpStopError, ValueError):
    """A model file or model object violates a structural invariant."""


class NoWitnessError(SmpStopError):
    """No (delta, epsilon) pair satisfies the regularity condition."""


class NumericalError(SmpStopError):
    """A numerical routine failed (quadrature, linear solve, monotonicity)."""


class QuadratureError(NumericalError):
    pass


class SingularSystemError(NumericalError):
    pass


class BudgetOverflowError(NumericalError):
    pass


class InconsistentPredicateError(SmpStopError):
    """A predicate stopping rule fired at two different epochs of one path."""


class NonEmbeddedHistoryError(SmpStopError, ValueError):
    """A decision-process history has a malformed state/action alternation."""
