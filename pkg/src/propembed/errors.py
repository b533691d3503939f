"""Exception hierarchy shared across the package.

The CLI maps these to distinct exit codes, so library code should pick
the class that matches the failure: bad user configuration, bad input
data, or a numeric breakdown during optimization.
"""


class ConfigError(ValueError):
    """Invalid run configuration (bad key, missing path, bad value)."""


class DataError(ValueError):
    """Malformed or inconsistent input data (files, matrices, labels)."""


class NumericError(RuntimeError):
    """Numeric failure at runtime (NaN loss, divergence)."""
