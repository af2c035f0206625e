"""Exception hierarchy shared by every module of the package."""


class PathRdeError(Exception):
    """Base class for all errors raised by pathrde."""


class DomainError(PathRdeError, ValueError):
    """A numeric argument lies outside the admissible range."""


class GridAlignmentError(PathRdeError, ValueError):
    """A time stamp does not coincide with a grid point."""


class HorizonError(PathRdeError, ValueError):
    """An operation would step past the time horizon."""


class CapabilityError(PathRdeError):
    """A functional lacks a derivative the operation needs."""


class ReferenceMismatchError(PathRdeError, ValueError):
    """A controlled path is used with a rough path it is not controlled by."""


class ExponentError(PathRdeError, ValueError):
    """The exponent pair (p, q) is outside the range the level-2 theory covers."""


class GuardError(PathRdeError, ValueError):
    """A brute-force oracle was asked for more work than its cap allows."""


class NonConvergenceError(PathRdeError):
    """Fixed-point iteration failed; ``diagnostics`` carries per-window data."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics if diagnostics is not None else []


class PathFormatError(PathRdeError, ValueError):
    """A serialized path (CSV or JSON) could not be parsed."""
