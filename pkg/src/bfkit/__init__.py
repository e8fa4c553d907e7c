"""Bias-field correction for 2D MR-like images.

Alternating closed-form solver for a kernel-weighted fuzzy clustering
objective with a smooth multiplicative bias, plus simulation and metrics.
"""

from bfkit.errors import (
    BfkitError,
    DegenerateClusterError,
    DegenerateInputError,
    FormatError,
    IllConditionedWarning,
    ParameterError,
    RangeError,
)

__version__ = "0.1.0"

__all__ = [
    "BfkitError",
    "DegenerateClusterError",
    "DegenerateInputError",
    "FormatError",
    "IllConditionedWarning",
    "ParameterError",
    "RangeError",
    "__version__",
]
