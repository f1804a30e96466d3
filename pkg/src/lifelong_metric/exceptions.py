"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Array shapes do not agree."""


class ConfigurationError(ValueError):
    """Invalid parameters or an unusable experiment setup."""


class DataError(ValueError):
    """Malformed input file."""


class DivergenceError(RuntimeError):
    """An iterative method produced non-finite values."""
