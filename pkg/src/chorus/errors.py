"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
InvariantError -> 4.
"""


class ChorusError(Exception):
    """Base class for all package errors."""


class ConfigError(ChorusError):
    """Invalid or inconsistent configuration."""


class DataError(ChorusError):
    """Malformed input data (bad labels, duplicate entries, missing files)."""


class InvariantError(ChorusError):
    """Internal state violated a structural invariant; indicates a bug."""
