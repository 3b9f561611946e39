"""Beam-position estimation and PPM detection with photon-counting detector arrays."""
from .model import ArrayGeometry, BeamParams, LinkBudget, InvalidParameter

__version__ = "0.1.0"

__all__ = ["ArrayGeometry", "BeamParams", "LinkBudget", "InvalidParameter", "__version__"]
