"""Exception types shared across the package."""


class LabError(Exception):
    """Base class for all errors raised by this package."""


class NonElliptic(LabError, ValueError):
    pass


class DimensionUnsupported(LabError, ValueError):
    pass


class ConvergenceFailure(LabError, RuntimeError):
    pass


class UntrustedIndex(LabError, IndexError):
    pass


class WindowTooWide(LabError, ValueError):
    pass


class WindowEmpty(LabError, ValueError):
    pass


class WindowConditionViolated(LabError, ValueError):
    pass


class GridUnderresolved(LabError, RuntimeError):
    pass


class RejectionStarved(LabError, RuntimeError):
    pass


class ProfileViolation(LabError, ValueError):
    pass


class InsufficientTail(LabError, ValueError):
    pass


class ConfigError(LabError, ValueError):
    pass


class TruncationWarning(UserWarning):
    """Raised as a warning when a truncated operator has untrusted rows."""
