"""Wavelet characterizations of Sobolev, Morrey-type and multiplier spaces."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    CoefficientField,
    DyadicCube,
    GridFunction,
    ParameterError,
    SpaceParams,
    WaveletIndex,
)
from .wavelets import HAAR, WaveletSpec, forward_dwt, inverse_dwt  # noqa: E402

__all__ = [
    "CoefficientField", "DyadicCube", "GridFunction", "ParameterError", "SpaceParams",
    "WaveletIndex", "HAAR", "WaveletSpec", "forward_dwt", "inverse_dwt", "__version__",
]
