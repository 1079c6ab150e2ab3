"""Acoustic word embedding workbench: synthetic language families, BGRU encoders
trained with PGE, CAE and CSE objectives, same-different evaluation, CKA-based
cross-lingual similarity matrices and Ward clustering."""

from .errors import (AweError, ConfigError, DataError, DegenerateInputError, FormatError,
                     GraphError, NumericError, ShapeError)

__version__ = "0.1.0"

__all__ = [
    "AweError",
    "ConfigError",
    "DataError",
    "DegenerateInputError",
    "FormatError",
    "GraphError",
    "NumericError",
    "ShapeError",
    "__version__",
]
