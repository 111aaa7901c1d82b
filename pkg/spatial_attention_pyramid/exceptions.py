"""Submodule providing the exceptions raised across the package."""

__all__ = [
    "ShapeError",
    "ConfigurationError",
    "DataFormatError",
    "NumericalError"
]


class ShapeError(ValueError):
    """Raised when tensor extents do not agree with an operation."""


class ConfigurationError(ValueError):
    """Raised when a configuration value is invalid or unknown."""


class DataFormatError(ValueError):
    """Raised when a dataset, image or checkpoint file cannot be parsed."""


class NumericalError(ArithmeticError):
    """Raised when non-finite values show up during optimisation."""
