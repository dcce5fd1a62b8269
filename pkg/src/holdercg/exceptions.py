class HolderCGError(Exception):
    """Base class for errors raised by this package."""


class DomainError(HolderCGError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConvergenceError(HolderCGError, RuntimeError):
    """An iterative subroutine hit its iteration cap."""


class OracleViolationError(HolderCGError, RuntimeError):
    """An oracle returned output inconsistent with its contract."""


class LineSearchError(HolderCGError, RuntimeError):
    """The adaptive line search exceeded its trial cap."""

    def __init__(self, message, last_L):
        super().__init__(message)
        self.last_L = last_L
