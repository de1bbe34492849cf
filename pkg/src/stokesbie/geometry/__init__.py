from .rodshape import RodShape, HemisphericalRodShape, build_rod_shape, bump, bump_primitive
from .surfaces import (
    IDENTITY_POSE,
    Pipe,
    PlaneWall,
    RigidPose,
    Rod,
    Spheroid,
    SurfaceGrid,
    place_expansion_centres,
    shape_hash,
    wall_patch_upsampler,
)
from .distance import distance_to_surface

__all__ = [
    "RodShape",
    "HemisphericalRodShape",
    "build_rod_shape",
    "bump",
    "bump_primitive",
    "RigidPose",
    "IDENTITY_POSE",
    "Spheroid",
    "Rod",
    "PlaneWall",
    "Pipe",
    "SurfaceGrid",
    "place_expansion_centres",
    "shape_hash",
    "wall_patch_upsampler",
    "distance_to_surface",
]
