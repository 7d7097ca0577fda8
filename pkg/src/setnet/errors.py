"""Exception hierarchy shared across the toolkit.

The CLI maps these onto its machine-readable error codes: bad
configuration -> "config", unreadable or malformed files -> "data",
everything raised by the numeric core -> "numeric".
"""


class SetnetError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SetnetError):
    """Invalid or inconsistent run configuration."""


class DataError(SetnetError):
    """Malformed or missing input data."""


class NumericError(SetnetError, ValueError):
    """Domain or usage error in a numeric operation."""
