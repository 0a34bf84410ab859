"""Exception types shared across the package.

The CLI maps these onto process exit codes; library users catch them directly.
"""


class ConfigError(ValueError):
    """Invalid configuration: unknown keys, contradictory settings, bad syntax."""


class DataError(ValueError):
    """Invalid data: missing columns, unparseable cells, non-finite values."""


class NumericError(RuntimeError):
    """Training or prediction produced a non-finite quantity."""
