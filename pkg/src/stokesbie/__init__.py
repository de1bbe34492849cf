"""Boundary-integral engine for rigid-particle Stokes flow.

The flow around rigid particles (spheroids and rods), optionally confined by
plane walls or a pipe in a triply periodic cell, is represented by a Stokes
double layer potential plus completion flows.  Singular and nearly singular
layer potentials are evaluated with a combined special quadrature: direct
Gauss-Legendre/trapezoidal quadrature far from surfaces, upsampled quadrature
at intermediate distances, and quadrature by expansion (QBX) with a
precomputation scheme close to and on the surfaces.  Periodic interactions
are computed with FFT-based spectral Ewald summation.
"""

from .quadrature import Rule1D, gauss_legendre, trapezoidal, direct_quadrature
from .geometry import (
    Spheroid,
    Rod,
    PlaneWall,
    Pipe,
    SurfaceGrid,
    RigidPose,
    build_rod_shape,
    place_expansion_centres,
)
from .kernels import eval_kernel
from .combined import SpecialQuadParams, classify
from .ewald import EwaldConfig

__all__ = [
    "Rule1D",
    "gauss_legendre",
    "trapezoidal",
    "direct_quadrature",
    "Spheroid",
    "Rod",
    "PlaneWall",
    "Pipe",
    "SurfaceGrid",
    "RigidPose",
    "build_rod_shape",
    "place_expansion_centres",
    "eval_kernel",
    "SpecialQuadParams",
    "classify",
    "EwaldConfig",
]

__version__ = "0.1.0"
