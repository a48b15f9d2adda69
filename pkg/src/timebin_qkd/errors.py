"""Exception types raised across the package."""


class InvalidParameterError(ValueError):
    """A parameter is non-finite, out of range, or otherwise inconsistent."""


class CapacityError(ValueError):
    """A time-bin state would exceed the configured number of slots."""


class FringeFitError(RuntimeError):
    """A fringe could not be fitted (degenerate or non-physical data)."""


class UndefinedQberError(ArithmeticError):
    """QBER requested for an empty sifted key."""


class ConfigError(ValueError):
    """A configuration file is malformed or references unknown fields."""
