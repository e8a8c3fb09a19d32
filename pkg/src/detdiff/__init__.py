"""Drift and diffusion of deterministic random walks on affine mod-1 maps."""
from .map_core import MapParams

__version__ = "0.1.0"
__all__ = ["MapParams", "__version__"]
