"""Galerkin finite elements with Crank-Nicolson stepping for paraxial
Schrödinger and real parabolic problems with dynamical boundary conditions."""

from ._kernels import BACKEND
from .fem1d import HERMITE, LINEAR, BandedSystem, DofField, FeSpace, Mesh1D

__version__ = "0.1.0"

__all__ = ["BACKEND", "LINEAR", "HERMITE", "Mesh1D", "FeSpace", "BandedSystem",
           "DofField", "__version__"]
