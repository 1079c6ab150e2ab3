"""Exception types shared across the workbench."""


class AweError(Exception):
    """Base class for workbench errors."""


class ShapeError(AweError, ValueError):
    """Tensor or matrix dimensions are inconsistent."""


class NumericError(AweError, FloatingPointError):
    """A NaN or infinity appeared where finite values are required."""


class GraphError(AweError, RuntimeError):
    """Misuse of the gradient tape (detached loss, non-scalar loss, ...)."""


class FormatError(AweError, ValueError):
    """A binary or JSON file does not match its declared format."""


class DegenerateInputError(AweError, ValueError):
    """Input has no variance or no structure to compare."""


class ConfigError(AweError, ValueError):
    """Invalid configuration value."""


class DataError(AweError, ValueError):
    """Missing or inconsistent data (manifests, splits, segments)."""
