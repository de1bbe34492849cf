"""Discretized particles and walls.

Particles (spheroids, rods) are axisymmetric surfaces of revolution with
tensor grids: Gauss-Legendre in the polar direction (three separate rules
for the rod's caps and middle cylinder) and the trapezoidal rule in the
azimuth.  Walls (plane wall, pipe) are unions of uniform rectangular patches
with Gauss-Legendre tensor grids; normals point into the fluid (outward for
particles, inward for walls).

All grids are built in the object's local frame and carried to the global
frame by a rigid pose.  Objects are immutable after construction and safe
for shared concurrent reads.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..quadrature import (
    UpsampleOperator,
    barycentric_matrix,
    gauss_legendre,
    trapezoidal,
    trig_resample_matrix,
)
from .rodshape import HemisphericalRodShape, RodShape


@dataclass(frozen=True)
class RigidPose:
    """Rigid transform local -> global: x_glob = R x_loc + t.

    The rotation is stored as a unit quaternion (w, x, y, z).
    """

    quaternion: tuple = (1.0, 0.0, 0.0, 0.0)
    translation: tuple = (0.0, 0.0, 0.0)

    @staticmethod
    def from_axis_angle(axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "RigidPose":
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        half = 0.5 * angle
        q = (np.cos(half), *(np.sin(half) * axis))
        return RigidPose(tuple(float(v) for v in q), tuple(float(v) for v in translation))

    @property
    def matrix(self) -> np.ndarray:
        w, x, y, z = self.quaternion
        n = w * w + x * x + y * y + z * z
        w, x, y, z = (v / np.sqrt(n) for v in (w, x, y, z))
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def to_global(self, x_loc: np.ndarray) -> np.ndarray:
        return x_loc @ self.matrix.T + np.asarray(self.translation)

    def to_local(self, x_glob: np.ndarray) -> np.ndarray:
        return (np.asarray(x_glob) - np.asarray(self.translation)) @ self.matrix

    def rotate(self, v: np.ndarray) -> np.ndarray:
        return v @ self.matrix.T

    def rotate_back(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v) @ self.matrix


IDENTITY_POSE = RigidPose()


@dataclass
class SurfaceGrid:
    """Quadrature nodes, weights (with area element) and normals of an object.

    Local-frame arrays are kept alongside the global ones; QBX precomputation
    and symmetry reuse operate in the local frame.
    """

    kind: str
    owner: object
    pose: RigidPose
    local_nodes: np.ndarray
    local_normals: np.ndarray
    weights: np.ndarray
    h: float
    # particles: theta/phi tensor structure
    theta: np.ndarray | None = None
    phi: np.ndarray | None = None
    part_slices: list | None = None
    n_phi: int = 0
    # walls: patch structure
    patch_shape: tuple | None = None  # (P1, P2)
    nodes_per_patch: tuple | None = None  # (n1, n2)
    patch_index: np.ndarray | None = None
    nodes: np.ndarray = field(default=None)
    normals: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.nodes is None:
            self.nodes = self.pose.to_global(self.local_nodes)
            self.normals = self.pose.rotate(self.local_normals)

    @property
    def n_nodes(self) -> int:
        return self.local_nodes.shape[0]

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    def enclosed_volume(self) -> float:
        # divergence theorem on x/3; meaningful for closed particle surfaces
        return float(np.einsum("ij,ij,i", self.nodes, self.normals, self.weights) / 3.0)


def place_expansion_centres(grid: SurfaceGrid, r_qbx: float):
    """Expansion centres ``c_i+- = x_i +- r n_i`` for every grid node."""
    if r_qbx <= 0:
        raise ValueError("expansion radius must be positive")
    plus = grid.nodes + r_qbx * grid.normals
    minus = grid.nodes - r_qbx * grid.normals
    return plus, minus


class _AxisymmetricBody:
    """Shared machinery for spheroids and rods (surfaces of revolution)."""

    def meridian(self, theta):
        raise NotImplementedError

    def meridian_derivatives(self, theta):
        raise NotImplementedError

    def _polar_rules(self):
        raise NotImplementedError

    def polar_nodes(self):
        rules = self._polar_rules()
        theta = np.concatenate([r.nodes for r in rules])
        lam = np.concatenate([r.weights for r in rules])
        slices = []
        start = 0
        for r in rules:
            slices.append(slice(start, start + len(r)))
            start += len(r)
        return theta, lam, slices

    def discretize(self, pose: RigidPose = IDENTITY_POSE) -> SurfaceGrid:
        theta, lam_t, slices = self.polar_nodes()
        phi_rule = trapezoidal(self.n_phi)
        phi, lam_p = phi_rule.nodes, phi_rule.weights
        rho, beta = self.meridian(theta)
        drho, dbeta = self.meridian_derivatives(theta)
        speed = np.sqrt(drho**2 + dbeta**2)
        w_area = rho * speed  # area element of a surface of revolution

        ct, st = np.cos(phi), np.sin(phi)
        nodes = np.empty((theta.size, phi.size, 3))
        nodes[:, :, 0] = rho[:, None] * ct[None, :]
        nodes[:, :, 1] = rho[:, None] * st[None, :]
        nodes[:, :, 2] = beta[:, None]
        normals = np.empty_like(nodes)
        normals[:, :, 0] = (-dbeta / speed)[:, None] * ct[None, :]
        normals[:, :, 1] = (-dbeta / speed)[:, None] * st[None, :]
        normals[:, :, 2] = (drho / speed)[:, None]
        weights = (w_area * lam_t)[:, None] * lam_p[None, :]

        return SurfaceGrid(
            kind=self.kind,
            owner=self,
            pose=pose,
            local_nodes=nodes.reshape(-1, 3),
            local_normals=normals.reshape(-1, 3),
            weights=weights.reshape(-1),
            h=self.grid_spacing,
            theta=theta,
            phi=phi,
            part_slices=slices,
            n_phi=self.n_phi,
        )

    def fine_copy(self, kappa: int):
        raise NotImplementedError

    def build_upsampler(self, kappa: int, pose: RigidPose = IDENTITY_POSE) -> UpsampleOperator:
        """Global upsampler: density interpolated onto the kappa-refined grid.

        Trigonometric resampling in the azimuth, barycentric Lagrange
        interpolation per polar part.
        """
        if kappa < 1 or int(kappa) != kappa:
            raise ValueError(f"upsampling factor must be a positive integer, got {kappa}")
        kappa = int(kappa)
        fine_obj = self.fine_copy(kappa)
        fine_grid = fine_obj.discretize(pose)
        theta_c, _, sl_c = self.polar_nodes()
        theta_f, _, sl_f = fine_obj.polar_nodes()
        polar_mats = [
            barycentric_matrix(theta_c[sc], theta_f[sf]) for sc, sf in zip(sl_c, sl_f)
        ]
        trig = trig_resample_matrix(self.n_phi, fine_obj.n_phi)
        nt_c, np_c = theta_c.size, self.n_phi
        nt_f, np_f = theta_f.size, fine_obj.n_phi

        def apply(values: np.ndarray) -> np.ndarray:
            v = values.reshape(nt_c, np_c, -1)
            out = np.empty((nt_f, np_c, v.shape[2]))
            for mat, sc, sf in zip(polar_mats, sl_c, sl_f):
                out[sf] = np.einsum("ft,tpk->fpk", mat, v[sc])
            out = np.einsum("gp,fpk->fgk", trig, out)
            shape = (nt_f * np_f,) + values.shape[1:]
            return out.reshape(shape)

        def materialize() -> np.ndarray:
            polar = np.zeros((nt_f, nt_c))
            for mat, sc, sf in zip(polar_mats, sl_c, sl_f):
                polar[sf, sc] = mat
            return np.kron(polar, trig)

        def contract(fine_values: np.ndarray) -> np.ndarray:
            g = fine_values.reshape(nt_f, np_f, -1)
            tmp = np.einsum("gp,fgk->fpk", trig, g)
            out = np.empty((nt_c, np_c, tmp.shape[2]))
            for mat, sc, sf in zip(polar_mats, sl_c, sl_f):
                out[sc] = np.einsum("ft,fpk->tpk", mat, tmp[sf])
            shape = (nt_c * np_c,) + fine_values.shape[1:]
            return out.reshape(shape)

        return UpsampleOperator(
            source_key=self.shape_key(),
            kappa=kappa,
            fine_grid=fine_grid,
            _apply=apply,
            _materialize=materialize,
            _contract=contract,
        )

    def shape_key(self) -> str:
        raise NotImplementedError


@dataclass
class Spheroid(_AxisymmetricBody):
    """Spheroid with equatorial semiaxis a and polar semiaxis c."""

    a: float
    c: float
    n_theta: int
    n_phi: int
    centre: tuple = (0.0, 0.0, 0.0)
    orientation: RigidPose | None = None
    kind: str = field(default="spheroid", init=False)

    def __post_init__(self):
        if self.a <= 0 or self.c <= 0:
            raise ValueError("spheroid semiaxes must be positive")
        if self.orientation is None:
            self.orientation = RigidPose(translation=tuple(self.centre))
        else:
            self.orientation = RigidPose(self.orientation.quaternion, tuple(self.centre))

    @property
    def pose(self) -> RigidPose:
        return self.orientation

    @property
    def grid_spacing(self) -> float:
        # azimuthal node spacing at the equator
        return 2.0 * np.pi * self.a / self.n_phi

    @property
    def bounding_radius(self) -> float:
        return max(self.a, self.c)

    def meridian(self, theta):
        return self.a * np.sin(theta), self.c * np.cos(theta)

    def meridian_derivatives(self, theta):
        return self.a * np.cos(theta), -self.c * np.sin(theta)

    def _polar_rules(self):
        return [gauss_legendre(self.n_theta, 0.0, np.pi)]

    def fine_copy(self, kappa: int) -> "Spheroid":
        return Spheroid(self.a, self.c, kappa * self.n_theta, kappa * self.n_phi,
                        self.centre, self.orientation)

    def surface_area(self) -> float:
        a, c = self.a, self.c
        if np.isclose(a, c):
            return 4.0 * np.pi * a * a
        if c > a:  # prolate
            e = np.sqrt(1.0 - (a / c) ** 2)
            return 2.0 * np.pi * a * a * (1.0 + (c / (a * e)) * np.arcsin(e))
        e = np.sqrt(1.0 - (c / a) ** 2)  # oblate
        return 2.0 * np.pi * a * a * (1.0 + ((1 - e * e) / e) * np.arctanh(e))

    def volume(self) -> float:
        return 4.0 * np.pi * self.a * self.a * self.c / 3.0

    def shape_key(self) -> str:
        return f"spheroid[a={self.a!r},c={self.c!r},nt={self.n_theta},np={self.n_phi}]"


@dataclass
class Rod(_AxisymmetricBody):
    """Cylindrical rod with rounded caps (smooth or hemispherical)."""

    length: float
    radius: float
    n1: int  # polar nodes per cap
    n2: int  # polar nodes of the middle cylinder
    n_phi: int
    cap: str = "smooth"
    cap_length: float | None = None
    centre: tuple = (0.0, 0.0, 0.0)
    orientation: RigidPose | None = None
    kind: str = field(default="rod", init=False)

    def __post_init__(self):
        if self.cap == "smooth":
            if self.cap_length is None and self.length <= 3.0 * self.radius:
                raise ValueError(
                    f"smooth rod requires L > 3R, got L={self.length}, R={self.radius}"
                )
            self.shape = RodShape(self.length, self.radius, cap_length=self.cap_length)
        elif self.cap == "hemispherical":
            self.shape = HemisphericalRodShape(self.length, self.radius)
        else:
            raise ValueError(f"unknown cap kind {self.cap!r}")
        if self.n2 % 2:
            raise ValueError("rod needs an even middle node count n2 for symmetry reuse")
        if self.orientation is None:
            self.orientation = RigidPose(translation=tuple(self.centre))
        else:
            self.orientation = RigidPose(self.orientation.quaternion, tuple(self.centre))

    @property
    def pose(self) -> RigidPose:
        return self.orientation

    @property
    def grid_spacing(self) -> float:
        return 2.0 * np.pi * self.radius / self.n_phi

    @property
    def bounding_radius(self) -> float:
        return 0.5 * self.length

    def meridian(self, theta):
        return self.shape(theta)

    def meridian_derivatives(self, theta):
        return self.shape.derivatives(theta)

    def _polar_rules(self):
        third = np.pi / 3.0
        return [
            gauss_legendre(self.n1, 0.0, third),
            gauss_legendre(self.n2, third, 2.0 * third),
            gauss_legendre(self.n1, 2.0 * third, np.pi),
        ]

    def fine_copy(self, kappa: int) -> "Rod":
        return Rod(self.length, self.radius, kappa * self.n1, kappa * self.n2,
                   kappa * self.n_phi, self.cap, self.cap_length,
                   self.centre, self.orientation)

    def shape_key(self) -> str:
        return (
            f"rod[L={self.length!r},R={self.radius!r},cap={self.cap},"
            f"capL={self.cap_length!r},n1={self.n1},n2={self.n2},np={self.n_phi}]"
        )


class _WallBase:
    """Shared machinery for patch-based walls."""

    def patch_param_rules(self, kappa: int = 1):
        r1 = gauss_legendre(kappa * self.n1, 0.0, 1.0)
        r2 = gauss_legendre(kappa * self.n2, 0.0, 1.0)
        return r1, r2

    def patch_origin(self, p1: int, p2: int):
        return p1 * self.patch_size[0], p2 * self.patch_size[1]

    def embed(self, s1, s2):
        """Map wall coordinates (s1, s2) to local points, normals, area element."""
        raise NotImplementedError

    def discretize(self, pose: RigidPose = IDENTITY_POSE, kappa: int = 1,
                   patches: list | None = None) -> SurfaceGrid:
        """Grid over ``patches`` (default all), each refined by ``kappa``."""
        P1, P2 = self.patches
        if patches is None:
            patches = [(i, j) for i in range(P1) for j in range(P2)]
        r1, r2 = self.patch_param_rules(kappa)
        d1, d2 = self.patch_size
        pts, nrm, wts, pidx = [], [], [], []
        for (p1, p2) in patches:
            o1, o2 = self.patch_origin(p1, p2)
            s1 = o1 + r1.nodes * d1
            s2 = o2 + r2.nodes * d2
            S1, S2 = np.meshgrid(s1, s2, indexing="ij")
            x, n, warea = self.embed(S1.ravel(), S2.ravel())
            lam = np.outer(r1.weights * d1, r2.weights * d2).ravel()
            pts.append(x)
            nrm.append(n)
            wts.append(lam * warea)
            pidx.append(np.full(lam.size, p1 * P2 + p2, dtype=int))
        grid = SurfaceGrid(
            kind=self.kind,
            owner=self,
            pose=pose,
            local_nodes=np.concatenate(pts),
            local_normals=np.concatenate(nrm),
            weights=np.concatenate(wts),
            h=self.grid_spacing_for(kappa),
            patch_shape=(P1, P2),
            nodes_per_patch=(kappa * self.n1, kappa * self.n2),
            patch_index=np.concatenate(pidx),
        )
        return grid

    @property
    def grid_spacing(self) -> float:
        return self.grid_spacing_for(1)

    def grid_spacing_for(self, kappa: int) -> float:
        """Largest spacing between grid points in either tensor direction."""
        r1, r2 = self.patch_param_rules(kappa)
        hs = []
        for rule, (d, P, scale) in zip(
            (r1, r2), ((self.patch_size[0], self.patches[0], self.metric1),
                       (self.patch_size[1], self.patches[1], self.metric2))
        ):
            s = rule.nodes * d
            line = np.concatenate([s + k * d for k in range(P)])
            line = np.concatenate([line, [s[0] + P * d]])  # wrap to next period
            hs.append(np.diff(np.sort(line)).max() * scale)
        return float(max(hs))

    def neighbourhood(self, patch: tuple, extent: int = 1) -> list:
        """The (2*extent+1)^2 patches around ``patch`` with periodic wrap."""
        P1, P2 = self.patches
        p1, p2 = patch
        out = []
        for di in range(-extent, extent + 1):
            for dj in range(-extent, extent + 1):
                out.append(((p1 + di) % P1, (p2 + dj) % P2))
        # drop wrap duplicates for very small walls
        seen, unique = set(), []
        for p in out:
            if p not in seen:
                seen.add(p)
                unique.append(p)
        return unique

    def nearest_patches(self, x_loc: np.ndarray, n_p: int = 9) -> list:
        """The ``n_p`` patches closest to ``x_loc`` by wrapped centre distance."""
        P1, P2 = self.patches
        d1, d2 = self.patch_size
        centres_1 = (np.arange(P1) + 0.5) * d1
        centres_2 = (np.arange(P2) + 0.5) * d2
        s1, s2 = self.project(x_loc)
        L1 = P1 * d1
        L2 = P2 * d2
        w1 = np.abs(np.mod(s1 - centres_1 + 0.5 * L1, L1) - 0.5 * L1) * self.metric1
        w2 = np.abs(np.mod(s2 - centres_2 + 0.5 * L2, L2) - 0.5 * L2) * self.metric2
        dist2 = w1[:, None] ** 2 + w2[None, :] ** 2
        flat = dist2.ravel()
        order = np.lexsort((np.arange(flat.size), flat))
        chosen = order[: min(n_p, flat.size)]
        return [(int(k) // P2, int(k) % P2) for k in chosen]


@dataclass
class PlaneWall(_WallBase):
    """Flat rectangular wall spanning the periodic cell, normal +z in local frame."""

    L1: float
    L2: float
    P1: int
    P2: int
    n1: int
    n2: int
    pose: RigidPose = IDENTITY_POSE
    kind: str = field(default="plane_wall", init=False)

    @property
    def patches(self):
        return (self.P1, self.P2)

    @property
    def patch_size(self):
        return (self.L1 / self.P1, self.L2 / self.P2)

    metric1 = 1.0
    metric2 = 1.0

    def embed(self, s1, s2):
        x = np.stack([s1, s2, np.zeros_like(s1)], axis=1)
        n = np.zeros_like(x)
        n[:, 2] = 1.0
        return x, n, np.ones_like(s1)

    def project(self, x_loc):
        return x_loc[0], x_loc[1]

    def distance_local(self, x_loc: np.ndarray) -> float:
        return abs(float(x_loc[2]))

    @property
    def bounding_radius(self) -> float:
        return 0.5 * np.hypot(self.L1, self.L2)

    def shape_key(self) -> str:
        return (
            f"planewall[L1={self.L1!r},L2={self.L2!r},P=({self.P1},{self.P2}),"
            f"n=({self.n1},{self.n2})]"
        )


@dataclass
class Pipe(_WallBase):
    """Circular pipe of radius R_c along the local x1 axis, fluid inside."""

    radius: float
    length: float
    P1: int  # axial patches
    P2: int  # azimuthal patches
    n1: int
    n2: int
    pose: RigidPose = IDENTITY_POSE
    kind: str = field(default="pipe", init=False)

    @property
    def patches(self):
        return (self.P1, self.P2)

    @property
    def patch_size(self):
        # s1 axial length, s2 azimuthal angle
        return (self.length / self.P1, 2.0 * np.pi / self.P2)

    @property
    def metric1(self):
        return 1.0

    @property
    def metric2(self):
        return self.radius

    def embed(self, s1, s2):
        x = np.stack([s1, self.radius * np.cos(s2), self.radius * np.sin(s2)], axis=1)
        n = np.stack([np.zeros_like(s2), -np.cos(s2), -np.sin(s2)], axis=1)
        return x, n, np.full_like(s1, self.radius)

    def project(self, x_loc):
        return x_loc[0], np.mod(np.arctan2(x_loc[2], x_loc[1]), 2.0 * np.pi)

    def distance_local(self, x_loc: np.ndarray) -> float:
        return abs(self.radius - float(np.hypot(x_loc[1], x_loc[2])))

    @property
    def bounding_radius(self) -> float:
        return np.hypot(0.5 * self.length, self.radius)

    def shape_key(self) -> str:
        return (
            f"pipe[R={self.radius!r},L={self.length!r},P=({self.P1},{self.P2}),"
            f"n=({self.n1},{self.n2})]"
        )


def wall_patch_upsampler(wall, kappa: int, patches: list,
                         pose: RigidPose = IDENTITY_POSE) -> UpsampleOperator:
    """Upsampler refining only ``patches`` of a wall by n-refinement.

    Returns the fine grid over the selected patches together with the
    interpolation from the coarse per-patch tensor grids.
    """
    if kappa < 1 or int(kappa) != kappa:
        raise ValueError(f"upsampling factor must be a positive integer, got {kappa}")
    kappa = int(kappa)
    fine_grid = wall.discretize(pose, kappa=kappa, patches=patches)
    r1c, r2c = wall.patch_param_rules(1)
    r1f, r2f = wall.patch_param_rules(kappa)
    m1 = barycentric_matrix(r1c.nodes, r1f.nodes)
    m2 = barycentric_matrix(r2c.nodes, r2f.nodes)
    n1c, n2c = wall.n1, wall.n2
    n1f, n2f = kappa * wall.n1, kappa * wall.n2
    n_patch = len(patches)

    def apply(values: np.ndarray) -> np.ndarray:
        v = values.reshape(n_patch, n1c, n2c, -1)
        out = np.einsum("ai,bj,pijk->pabk", m1, m2, v)
        return out.reshape((n_patch * n1f * n2f,) + values.shape[1:])

    def materialize() -> np.ndarray:
        per_patch = np.kron(m1, m2)
        out = np.zeros((n_patch * n1f * n2f, n_patch * n1c * n2c))
        for p in range(n_patch):
            out[p * n1f * n2f:(p + 1) * n1f * n2f,
                p * n1c * n2c:(p + 1) * n1c * n2c] = per_patch
        return out

    def contract(fine_values: np.ndarray) -> np.ndarray:
        g = fine_values.reshape(n_patch, n1f, n2f, -1)
        out = np.einsum("ai,bj,pabk->pijk", m1, m2, g)
        return out.reshape((n_patch * n1c * n2c,) + fine_values.shape[1:])

    return UpsampleOperator(
        source_key=wall.shape_key() + f"|patches={len(patches)}",
        kappa=kappa,
        fine_grid=fine_grid,
        _apply=apply,
        _materialize=materialize,
        _contract=contract,
    )


def shape_hash(obj) -> str:
    """Stable short hash identifying a shape and its discretization."""
    return hashlib.sha256(obj.shape_key().encode()).hexdigest()[:16]
