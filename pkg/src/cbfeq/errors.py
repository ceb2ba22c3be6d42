"""Exception hierarchy.

Configuration problems map to CLI exit code 2, numerical failures to 3.
"""


class ConfigError(ValueError):
    """Inconsistent or invalid problem data."""


class UnsupportedDimensionError(ConfigError):
    pass


class InconsistentInstanceError(ConfigError):
    pass


class NotAnEigenvectorError(ConfigError):
    pass


class NumericalError(ArithmeticError):
    """A computation could not be completed reliably."""


class DegenerateConstraintError(NumericalError):
    """The filter constraint lost its input direction (g^T grad h ~ 0 while active)."""

    def __init__(self, x, msg=None):
        self.x = x
        super().__init__(msg or f"degenerate filter constraint at x={list(map(float, x))}")


class TracingError(NumericalError):
    pass


class ConsistencyError(NumericalError):
    """Two independent computation routes disagree."""
