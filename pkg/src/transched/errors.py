"""Exception hierarchy shared across the package.

The three leaf classes map one-to-one onto CLI exit codes (2, 3, 4) so
that scripted callers can distinguish configuration mistakes from bad
input data and from numerical breakdowns.
"""


class TranschedError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TranschedError):
    """Invalid configuration value or combination of settings."""


class DataError(TranschedError):
    """Malformed, inconsistent, or insufficient input data."""


class NumericalError(TranschedError):
    """Numerical failure, e.g. an ill-conditioned or indefinite solve."""
