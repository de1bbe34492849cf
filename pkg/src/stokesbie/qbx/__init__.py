from .expansion import (
    DipoleExpansion,
    compute_coefficients,
    compute_coefficients_reference,
    dipole_densities,
    eval_dipole_potential,
    eval_expansion_stokes,
    onsurface_kernel,
)
from .precompute import (
    ParticleQbxOps,
    SurfaceDensity,
    WallQbxOps,
    make_qbx_ops,
)

__all__ = [
    "DipoleExpansion",
    "compute_coefficients",
    "compute_coefficients_reference",
    "dipole_densities",
    "eval_dipole_potential",
    "eval_expansion_stokes",
    "onsurface_kernel",
    "ParticleQbxOps",
    "WallQbxOps",
    "SurfaceDensity",
    "make_qbx_ops",
]
