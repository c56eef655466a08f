"""Exception types shared across the package.

The split between configuration and data errors mirrors the CLI exit
codes (2 and 3 respectively); anything else is treated as internal.
"""


class NaipwError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(NaipwError, ValueError):
    """A spec, hyperparameter, or config value is out of contract."""


class DataError(NaipwError, ValueError):
    """Input data violates a precondition (bad columns, single-arm sample, ...)."""


class DegenerateArmError(DataError):
    """Every generated treatment assignment landed in one arm."""


class TrainingDivergedError(NaipwError, RuntimeError):
    """Network parameters became non-finite during optimization."""
