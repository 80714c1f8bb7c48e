"""Predictive coding as layerwise descent on a two-part codelength."""

from .errors import PcmdlError
from .model import (
    Activation,
    Architecture,
    CodelengthReport,
    Dataset,
    GaussianPrior,
    LatentState,
    NetworkParams,
)
from .numerics import RngStream

__all__ = [
    "Activation",
    "Architecture",
    "CodelengthReport",
    "Dataset",
    "GaussianPrior",
    "LatentState",
    "NetworkParams",
    "PcmdlError",
    "RngStream",
]
__version__ = "0.1.0"
