"""Exception hierarchy shared by all rotavg modules."""

from __future__ import annotations


class RotavgError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(RotavgError, ValueError):
    """An argument violates a documented precondition."""


class DegenerateProjectionError(RotavgError, ValueError):
    """The nearest rotation to a rank <= 1 matrix is not unique."""


class DuplicateEdgeError(InvalidArgumentError):
    """Two edges connect the same unordered node pair."""


class FactorizationError(RotavgError):
    """The shifted operator could not be factorized."""


class EigenConvergenceError(RotavgError):
    """The Krylov eigensolver exhausted its restart budget.

    Attributes:
        residual_norms: best residual norms reached before giving up (may be empty).
    """

    def __init__(self, message: str, residual_norms=()):
        super().__init__(message)
        self.residual_norms = tuple(residual_norms)


class GenerationError(RotavgError):
    """A random instance could not be generated (e.g. never connected)."""


class G2OParseError(RotavgError, ValueError):
    """Malformed g2o input; carries the offending 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataError(G2OParseError):
    """Well-formed g2o line with unacceptable numeric content."""


class EmptyDatasetError(G2OParseError):
    """A g2o file contained no usable edges."""
