"""Exception types shared across the package."""


class ShapeMismatchError(ValueError):
    """Two masks that must share dimensions do not."""


class ConfigError(ValueError):
    """User-supplied configuration or input file is invalid."""


class InvariantViolation(RuntimeError):
    """An internal consistency check failed; indicates a bug, not bad input."""
