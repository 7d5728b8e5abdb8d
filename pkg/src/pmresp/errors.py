"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class ConvergenceError(RuntimeError):
    """An iterative procedure failed to reach its tolerance."""

    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class PlanError(ValueError):
    """A truncation plan is unusable for the requested operation."""


class PreconditionError(ValueError):
    """A documented precondition of an operation is violated."""


class TruncationCapError(RuntimeError):
    """A series needed more terms than the configured hard cap.

    Carries the partial result so callers can decide whether to use it.
    """

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial
