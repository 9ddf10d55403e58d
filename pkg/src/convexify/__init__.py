"""Convexification reconstruction of a dielectric coefficient from multi-frequency backscatter data."""

from .config import RunConfig
from .solver import reconstruct

__all__ = ["RunConfig", "reconstruct"]
__version__ = "0.1.0"
