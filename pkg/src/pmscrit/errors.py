"""Exception hierarchy shared by all modules."""


class PMSError(Exception):
    """Base class for errors raised by pmscrit."""


class DomainError(PMSError, ValueError):
    """An argument lies outside the documented domain (NaN, inf, bad level, ...)."""


class ConvergenceError(PMSError, ArithmeticError):
    """A numerical routine exhausted its budget before reaching tolerance.

    The best available estimate is kept on ``estimate`` and the error
    estimate on ``error`` so callers can decide whether it is usable.
    """

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class BracketError(PMSError, ValueError):
    """Root bracket does not enclose a sign change."""


class RangeError(PMSError, ValueError):
    """A query falls outside the range covered by a precomputed grid."""


class DesignError(PMSError, ValueError):
    """Regression design matrix is malformed or rank deficient."""


class PreconditionError(PMSError, ValueError):
    """An operation's documented precondition was violated by its inputs."""
