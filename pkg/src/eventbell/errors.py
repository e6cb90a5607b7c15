"""Exception types raised by the simulator and analysis code."""


class EventBellError(Exception):
    """Base class for all package errors."""


class ConfigError(EventBellError, ValueError):
    """Invalid parameters, malformed config text or inconsistent inputs."""


class EmptyTableError(EventBellError):
    """A coincidence table (or count combination) has a zero denominator.

    Raised instead of returning NaN so a CHSH value is never built from an
    undefined correlation.  Widen the window or simulate more events.
    """

    def __init__(self, message, settings=None):
        super().__init__(message)
        self.settings = settings


class DegenerateNormError(EventBellError):
    """A beam-splitter output message has (numerically) zero norm."""


class NormalizationError(EventBellError, ValueError):
    """A quantum state or direction vector is not normalized."""
