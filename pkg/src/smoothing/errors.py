class SmoothingError(Exception):
    """Base class for errors raised by this package."""


class DomainError(SmoothingError, ValueError):
    """Input outside the mathematical domain of an operation."""


class ConvergenceError(SmoothingError, RuntimeError):
    """An iterative routine stopped without meeting its tolerance."""


class NodeLimitError(SmoothingError, RuntimeError):
    """A tree traversal hit its node cap.  The partial result is attached."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
