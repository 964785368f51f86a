"""Exception hierarchy shared across the package."""


class StreamClustError(Exception):
    """Base class for all errors raised by streamclust."""


class InvalidInput(StreamClustError, ValueError):
    """Malformed user input: wrong dimension, bad parameter, unreadable data."""


class InsufficientData(StreamClustError):
    """Too few points for the requested estimate."""


class DegenerateSystem(StreamClustError):
    """The trace-estimation linear system is numerically singular."""


class DegenerateGeometry(StreamClustError):
    """The shrinkage-weight system is singular (no off-spherical structure)."""


class InvalidMetric(StreamClustError, ValueError):
    """A covariance handed to a distance routine is not positive definite."""


class NoClusters(StreamClustError):
    """An operation needing at least one cluster got none."""


class InvariantViolation(StreamClustError, AssertionError):
    """Internal bookkeeping no longer balances."""
