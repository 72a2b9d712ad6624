"""Langevin-noise and auxiliary-field quantization of absorbing dielectrics on a 1-D lattice."""

from .units import NATURAL, Units

__version__ = "0.1.0"

__all__ = ["NATURAL", "Units", "__version__"]
