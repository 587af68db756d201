"""Spectral analysis of the linearized radial and non-radial operators around
the rescaled stationary state of a parabolic-elliptic chemotaxis model."""

from .radial_core import Parameters

__all__ = ["Parameters"]
__version__ = "0.1.0"
