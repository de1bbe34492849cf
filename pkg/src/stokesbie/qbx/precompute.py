"""Precomputed QBX operators with symmetry reuse.

Rigid objects with symmetry need expansion data only at canonical sites:
half a meridian of nodes for axisymmetric particles (n_theta/2 for
spheroids, n1 + n2/2 for rods), one patch's nodes for walls with uniform
patches.  Every other node is a symmetry copy (azimuthal rotation and
equatorial reflection for particles; patch translation, plus rotation for
pipes), and evaluation at a copy transforms the density into the canonical
configuration, applies canonical data, and rotates the result back.

Stored per canonical node: the onsurface matrix R_i (3 x 3*N_tilde, the
two-sided average, with kappa_QBX and p_QBX fully absorbed) and expansion
coefficients of the three constant basis densities at the outer centre
(the linear map M_i contracted with constants; the full M_i is applied
matrix-free on demand for general densities).  R matrices and basis
coefficients are cached on disk keyed by shape, discretization and
(r_QBX, p_QBX, kappa_QBX).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .. import cache
from ..combined import SpecialQuadParams
from ..geometry import wall_patch_upsampler
from ..geometry.surfaces import Pipe, PlaneWall
from .expansion import (
    DEFAULT_DROP_TOL,
    DipoleExpansion,
    compute_coefficients,
    eval_expansion_stokes,
    onsurface_kernel,
)


@dataclass
class SurfaceDensity:
    """Nodal density with an optional constant-value fast path."""

    values: np.ndarray
    constant: np.ndarray | None = None
    version: int = 0

    @staticmethod
    def const(q_tilde, n_nodes: int, version: int = 0) -> "SurfaceDensity":
        q_tilde = np.asarray(q_tilde, dtype=float)
        return SurfaceDensity(np.tile(q_tilde, (n_nodes, 1)), q_tilde, version)


def _rotz(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


_REFLECT_Z = np.diag([1.0, 1.0, -1.0])


class ParticleQbxOps:
    """Shape-level QBX operators of an axisymmetric particle (local frame)."""

    def __init__(self, body, params: SpecialQuadParams,
                 drop_tol: float = DEFAULT_DROP_TOL):
        self.body = body
        self.params = params
        self.drop_tol = drop_tol
        self.grid = body.discretize()  # identity pose: local frame
        self.n_phi = self.grid.n_phi
        self.n_theta = self.grid.theta.size
        if self.n_theta % 2:
            raise ValueError("axisymmetric particles need an even polar node count")
        self.canonical = np.arange(self.n_theta // 2)
        self._upsampler = None
        self._r_stack = None
        self._basis = None
        self._kd = None
        self._coeff_cache: dict = {}
        self.fallbacks = 0  # targets in the QBX region missed by every ball

    # -- lazy pieces --------------------------------------------------------
    @property
    def n_canonical(self) -> int:
        return self.canonical.size

    @property
    def upsampler(self):
        if self._upsampler is None:
            self._upsampler = self.body.build_upsampler(self.params.kappa_qbx)
        return self._upsampler

    def _cache_key(self, what: str) -> str:
        p = self.params
        return (
            f"{what}|{self.body.shape_key()}|r={p.r_qbx!r}|p={p.p_qbx}"
            f"|kappa={p.kappa_qbx}|drop={self.drop_tol!r}|v1"
        )

    def _node_flat(self, i_theta: int, j_phi: int) -> int:
        return i_theta * self.n_phi + j_phi

    def canonical_sites(self):
        """(flat index, node, normal) of the canonical meridian nodes."""
        idx = np.array([self._node_flat(a, 0) for a in self.canonical])
        return idx, self.grid.local_nodes[idx], self.grid.local_normals[idx]

    # -- onsurface ----------------------------------------------------------
    @property
    def r_stack(self) -> np.ndarray:
        """(n_can, 3, N, 3): two-side-averaged onsurface maps, canonical nodes."""
        if self._r_stack is not None:
            return self._r_stack
        key = self._cache_key("Rstack")
        hit = cache.load(key)
        if hit is not None:
            self._r_stack = hit["r_stack"]
            return self._r_stack
        fine = self.upsampler.fine_grid
        p = self.params
        idx, xs, ns = self.canonical_sites()
        out = np.empty((idx.size, 3, self.grid.n_nodes, 3))
        for a, (x_i, n_i) in enumerate(zip(xs, ns)):
            k_sum = None
            for sgn in (+1.0, -1.0):
                c = x_i + sgn * p.r_qbx * n_i
                K = onsurface_kernel(
                    fine.local_nodes, fine.local_normals, fine.weights,
                    c, p.r_qbx, p.p_qbx, x_i, drop_tol=self.drop_tol,
                )
                k_sum = K if k_sum is None else k_sum + K
            k_avg = 0.5 * k_sum  # (Nf, 3, 3)
            coarse = self.upsampler.contract(k_avg.reshape(fine.n_nodes, 9))
            out[a] = coarse.reshape(self.grid.n_nodes, 3, 3).transpose(1, 0, 2)
        cache.store(key, r_stack=out)
        self._r_stack = out
        return out

    def onsurface_apply(self, q_local: np.ndarray) -> np.ndarray:
        """Double layer of this particle at all of its own nodes (local frame)."""
        q = np.asarray(q_local, dtype=float).reshape(self.n_theta, self.n_phi, 3)
        n_can = self.n_canonical
        r_flat = self.r_stack.reshape(n_can * 3, self.grid.n_nodes * 3)
        out = np.empty((self.n_theta, self.n_phi, 3))
        for j in range(self.n_phi):
            rot = _rotz(self.grid.phi[j] - self.grid.phi[0])
            for refl in (False, True):
                Q = rot @ _REFLECT_Z if refl else rot
                qc = np.roll(q, -j, axis=1)
                if refl:
                    qc = qc[::-1]
                qc = qc @ Q  # component rotation by Q^T
                vals = (r_flat @ qc.reshape(-1)).reshape(n_can, 3)
                vals = vals @ Q.T
                rows = (self.n_theta - 1 - self.canonical) if refl else self.canonical
                out[rows, j] = vals
        return out.reshape(-1, 3)

    # -- offsurface ---------------------------------------------------------
    @property
    def centre_tree(self) -> cKDTree:
        if self._kd is None:
            centres = self.grid.local_nodes + self.params.r_qbx * self.grid.local_normals
            self._kd = cKDTree(centres)
        return self._kd

    @property
    def basis_coeffs(self) -> np.ndarray:
        """(n_can, 3, 4, n_coeffs) coefficients for constant e_x, e_y, e_z."""
        if self._basis is not None:
            return self._basis
        key = self._cache_key("basis")
        hit = cache.load(key)
        if hit is not None:
            self._basis = hit["re"] + 1j * hit["im"]
            return self._basis
        fine = self.upsampler.fine_grid
        p = self.params
        idx, xs, ns = self.canonical_sites()
        qb = np.stack([
            np.tile(np.eye(3)[b], (fine.n_nodes, 1)) for b in range(3)
        ])
        out = []
        for x_i, n_i in zip(xs, ns):
            c = x_i + p.r_qbx * n_i
            z = compute_coefficients(
                fine.local_nodes, fine.local_normals, fine.weights, qb,
                c, p.r_qbx, p.p_qbx, drop_tol=self.drop_tol,
            )
            out.append(z)
        self._basis = np.stack(out)
        cache.store(key, re=self._basis.real, im=self._basis.imag)
        return self._basis

    def _canonical_of(self, flat_idx: int):
        """Map a node index to (canonical row, phi shift, reflected?)."""
        i, j = divmod(int(flat_idx), self.n_phi)
        refl = i >= self.n_theta // 2
        a = self.n_theta - 1 - i if refl else i
        return int(np.nonzero(self.canonical == a)[0][0]), j, refl

    def eval_qbx(self, targets_local: np.ndarray, density: SurfaceDensity):
        """QBX evaluation at offsurface targets inside the QBX region.

        Returns (values, handled): rows with ``handled == False`` fell outside
        every ball of convergence and must use the innermost upsampled rule.
        """
        targets = np.atleast_2d(np.asarray(targets_local, dtype=float))
        p = self.params
        dist, nearest = self.centre_tree.query(targets, k=1)
        vals = np.zeros((targets.shape[0], 3))
        handled = dist <= p.r_qbx * (1.0 + 1e-12)
        self.fallbacks += int((~handled).sum())
        for flat in np.unique(nearest[handled]):
            rows = np.nonzero(handled & (nearest == flat))[0]
            vals[rows] = self._eval_at_centre(int(flat), targets[rows], density)
        return vals, handled

    def _eval_at_centre(self, flat: int, targets: np.ndarray,
                        density: SurfaceDensity) -> np.ndarray:
        p = self.params
        if density.constant is not None:
            a, j, refl = self._canonical_of(flat)
            rot = _rotz(self.grid.phi[j] - self.grid.phi[0])
            Q = rot @ _REFLECT_Z if refl else rot
            zb = self.basis_coeffs[a]  # (3 basis, 4, nq)
            q_can = density.constant @ Q  # Q^T q
            z = np.tensordot(q_can, zb, axes=(0, 0))
            idx = self._node_flat(self.canonical[a], 0)
            centre = (self.grid.local_nodes[idx]
                      + p.r_qbx * self.grid.local_normals[idx])
            exp = DipoleExpansion(centre, p.r_qbx, p.p_qbx, z)
            return eval_expansion_stokes(exp, targets @ Q) @ Q.T
        exp = self._density_expansion(flat, density)
        return eval_expansion_stokes(exp, targets)

    def _density_expansion(self, flat: int, density: SurfaceDensity) -> DipoleExpansion:
        key = (flat, density.version)
        exp = self._coeff_cache.get(key)
        if exp is not None:
            return exp
        if self._coeff_cache and next(iter(self._coeff_cache))[1] != density.version:
            self._coeff_cache.clear()
        p = self.params
        fine = self.upsampler.fine_grid
        qf = self.upsampler.apply(density.values)
        centre = self.grid.local_nodes[flat] + p.r_qbx * self.grid.local_normals[flat]
        exp = compute_coefficients(
            fine.local_nodes, fine.local_normals, fine.weights, qf,
            centre, p.r_qbx, p.p_qbx, drop_tol=self.drop_tol,
        )
        self._coeff_cache[key] = exp
        return exp


class WallQbxOps:
    """Shape-level QBX operators of a uniform-patch wall (local frame).

    The expansion surface Gamma-tilde is the patch of the expansion centre
    plus its 8 neighbours (N_P = 9); contributions from farther patches are
    not part of these operators.
    """

    def __init__(self, wall, params: SpecialQuadParams,
                 drop_tol: float = DEFAULT_DROP_TOL):
        if not isinstance(wall, (PlaneWall, Pipe)):
            raise TypeError("WallQbxOps requires a plane wall or pipe")
        self.wall = wall
        self.params = params
        self.drop_tol = drop_tol
        if params.n_patches != 9:
            raise ValueError("wall QBX is precomputed for N_P = 9")
        self.offsets = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1)]
        self.grid = wall.discretize()  # local frame, all patches
        self.n1, self.n2 = wall.n1, wall.n2
        self.per_patch = self.n1 * self.n2
        # canonical neighbourhood around patch (0, 0), unwrapped coordinates
        self.canon_grid = wall.discretize(patches=self.offsets)
        self._fine = None
        self._r_stack = None
        self._basis = None
        self._kd = None
        self._coeff_cache: dict = {}
        self.fallbacks = 0

    @property
    def fine(self):
        if self._fine is None:
            self._fine = wall_patch_upsampler(self.wall, self.params.kappa_qbx,
                                              self.offsets)
        return self._fine

    def _cache_key(self, what: str) -> str:
        p = self.params
        return (
            f"{what}|{self.wall.shape_key()}|r={p.r_qbx!r}|p={p.p_qbx}"
            f"|kappa={p.kappa_qbx}|drop={self.drop_tol!r}|v1"
        )

    def canonical_sites(self):
        """Nodes of the canonical patch within the canonical neighbourhood."""
        centre_block = self.offsets.index((0, 0))
        idx = np.arange(centre_block * self.per_patch,
                        (centre_block + 1) * self.per_patch)
        return idx, self.canon_grid.local_nodes[idx], self.canon_grid.local_normals[idx]

    @property
    def r_stack(self) -> np.ndarray:
        """(n1*n2, 3, 9*n1*n2, 3) onsurface maps over the 9-patch surface."""
        if self._r_stack is not None:
            return self._r_stack
        key = self._cache_key("Rstack")
        hit = cache.load(key)
        if hit is not None:
            self._r_stack = hit["r_stack"]
            return self._r_stack
        fg = self.fine.fine_grid
        p = self.params
        idx, xs, ns = self.canonical_sites()
        out = np.empty((idx.size, 3, self.canon_grid.n_nodes, 3))
        for a, (x_i, n_i) in enumerate(zip(xs, ns)):
            k_sum = None
            for sgn in (+1.0, -1.0):
                c = x_i + sgn * p.r_qbx * n_i
                K = onsurface_kernel(
                    fg.local_nodes, fg.local_normals, fg.weights,
                    c, p.r_qbx, p.p_qbx, x_i, drop_tol=self.drop_tol,
                )
                k_sum = K if k_sum is None else k_sum + K
            coarse = self.fine.contract(0.5 * k_sum.reshape(fg.n_nodes, 9))
            out[a] = coarse.reshape(self.canon_grid.n_nodes, 3, 3).transpose(1, 0, 2)
        cache.store(key, r_stack=out)
        self._r_stack = out
        return out

    @property
    def basis_coeffs(self) -> np.ndarray:
        if self._basis is not None:
            return self._basis
        key = self._cache_key("basis")
        hit = cache.load(key)
        if hit is not None:
            self._basis = hit["re"] + 1j * hit["im"]
            return self._basis
        fg = self.fine.fine_grid
        p = self.params
        idx, xs, ns = self.canonical_sites()
        qb = np.stack([
            np.tile(np.eye(3)[b], (fg.n_nodes, 1)) for b in range(3)
        ])
        out = []
        for x_i, n_i in zip(xs, ns):
            c = x_i + p.r_qbx * n_i
            out.append(compute_coefficients(
                fg.local_nodes, fg.local_normals, fg.weights, qb,
                c, p.r_qbx, p.p_qbx, drop_tol=self.drop_tol,
            ))
        self._basis = np.stack(out)
        cache.store(key, re=self._basis.real, im=self._basis.imag)
        return self._basis

    # -- symmetry transforms --------------------------------------------------
    def patch_transform(self, p1: int, p2: int):
        """(Q, t): canonical neighbourhood -> neighbourhood of patch (p1, p2)."""
        d1, d2 = self.wall.patch_size
        if isinstance(self.wall, PlaneWall):
            return np.eye(3), np.array([p1 * d1, p2 * d2, 0.0])
        ang = p2 * d2
        c, s = np.cos(ang), np.sin(ang)
        Q = np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
        return Q, np.array([p1 * d1, 0.0, 0.0])

    def to_canonical(self, x_loc: np.ndarray, p1: int, p2: int) -> np.ndarray:
        """Map a local target into the contiguous canonical patch frame.

        Tangential translations are wrapped to the nearest image so targets
        by the cell boundary land inside the canonical neighbourhood; pipe
        azimuth wraps through the rotation itself.
        """
        Q, t = self.patch_transform(p1, p2)
        rel = np.atleast_2d(np.asarray(x_loc, dtype=float)) - t
        if isinstance(self.wall, PlaneWall):
            rel[:, 0] -= self.wall.L1 * np.rint(rel[:, 0] / self.wall.L1)
            rel[:, 1] -= self.wall.L2 * np.rint(rel[:, 1] / self.wall.L2)
            return rel @ Q
        out = rel @ Q
        out[:, 0] -= self.wall.length * np.rint(out[:, 0] / self.wall.length)
        return out

    def gather_neighbourhood(self, p1: int, p2: int, q_local: np.ndarray) -> np.ndarray:
        """Density on the 9 patches around (p1, p2), canonical component frame."""
        P1, P2 = self.wall.patches
        Q, _ = self.patch_transform(p1, p2)
        parts = []
        for (di, dj) in self.offsets:
            blk = ((p1 + di) % P1) * P2 + ((p2 + dj) % P2)
            parts.append(q_local[blk * self.per_patch:(blk + 1) * self.per_patch])
        return np.concatenate(parts) @ Q

    def onsurface_apply(self, q_local: np.ndarray) -> np.ndarray:
        """9-patch QBX part of the onsurface double layer at all wall nodes.

        Contributions from patches outside each node's neighbourhood are
        direct-quadrature sums handled by the caller.
        """
        q = np.asarray(q_local, dtype=float)
        P1, P2 = self.wall.patches
        n_can = self.per_patch
        r_flat = self.r_stack.reshape(n_can * 3, self.canon_grid.n_nodes * 3)
        out = np.empty_like(q)
        for p1 in range(P1):
            for p2 in range(P2):
                Q, _ = self.patch_transform(p1, p2)
                rho = self.gather_neighbourhood(p1, p2, q)
                vals = (r_flat @ rho.reshape(-1)).reshape(n_can, 3) @ Q.T
                blk = p1 * P2 + p2
                out[blk * self.per_patch:(blk + 1) * self.per_patch] = vals
        return out

    # -- offsurface -----------------------------------------------------------
    @property
    def centre_tree(self) -> cKDTree:
        """KD-tree over expansion centres, augmented with tangential periodic
        copies so wrapped targets near the cell boundary find the true
        nearest centre; query indices are mapped back modulo n_nodes."""
        if self._kd is None:
            centres = self.grid.local_nodes + self.params.r_qbx * self.grid.local_normals
            copies = [centres]
            if isinstance(self.wall, PlaneWall):
                shifts = [(self.wall.L1, 0.0), (0.0, self.wall.L2)]
                for sx, sy in shifts:
                    for sgn in (1.0, -1.0):
                        shifted = centres.copy()
                        shifted[:, 0] += sgn * sx
                        shifted[:, 1] += sgn * sy
                        copies.append(shifted)
            else:  # pipe: axial copies only (azimuth is already closed)
                for sgn in (1.0, -1.0):
                    shifted = centres.copy()
                    shifted[:, 0] += sgn * self.wall.length
                    copies.append(shifted)
            self._kd = cKDTree(np.concatenate(copies))
            self._kd_n = centres.shape[0]
        return self._kd

    def nearest_centre(self, targets_local: np.ndarray):
        dist, idx = self.centre_tree.query(np.atleast_2d(targets_local), k=1)
        return dist, idx % self._kd_n

    def node_patch(self, flat: int):
        blk, a = divmod(int(flat), self.per_patch)
        P1, P2 = self.wall.patches
        return blk // P2, blk % P2, a

    def base_patch_of(self, x_loc: np.ndarray):
        """Wrapped patch index whose footprint contains the local target."""
        P1, P2 = self.wall.patches
        d1, d2 = self.wall.patch_size
        s1, s2 = self.wall.project(np.asarray(x_loc, dtype=float))
        return int(np.floor(s1 / d1)) % P1, int(np.floor(s2 / d2)) % P2

    def canonical_fine(self, kappa: int):
        """Canonical-neighbourhood upsampler for an arbitrary factor."""
        if kappa == self.params.kappa_qbx:
            return self.fine
        hit = getattr(self, "_fine_others", None)
        if hit is None:
            hit = self._fine_others = {}
        ups = hit.get(kappa)
        if ups is None:
            ups = wall_patch_upsampler(self.wall, kappa, self.offsets)
            hit[kappa] = ups
        return ups

    def eval_upsampled_canonical(self, x_loc: np.ndarray, q_local: np.ndarray,
                                 kappa: int):
        """kappa-refined 9-patch contribution at one local target.

        Evaluated in the canonical neighbourhood frame so periodic wrap and
        pipe curvature are exact; returns (value_local, patches) where
        ``patches`` are the wrapped patch indices covered.
        """
        from .._kernels import double_layer_sum

        p1, p2 = self.base_patch_of(x_loc)
        Q, _ = self.patch_transform(p1, p2)
        x_can = self.to_canonical(x_loc, p1, p2)
        fine_cache = getattr(self, "_fine_density_cache", None)
        if fine_cache is None:
            fine_cache = self._fine_density_cache = {}
        key = (p1, p2, kappa)
        hit = fine_cache.get(key)
        if hit is None or hit[0] is not q_local:
            if len(fine_cache) > 512:
                fine_cache.clear()
            rho = self.gather_neighbourhood(p1, p2, q_local)
            if kappa == 1:
                fg = self.canon_grid
                qf = rho
            else:
                ups = self.canonical_fine(kappa)
                fg = ups.fine_grid
                qf = ups.apply(rho)
            fine_cache[key] = (q_local, fg, qf)
        else:
            _, fg, qf = hit
        val = double_layer_sum(
            np.ascontiguousarray(x_can),
            np.ascontiguousarray(fg.local_nodes),
            np.ascontiguousarray(qf), np.ascontiguousarray(fg.local_normals),
            np.ascontiguousarray(fg.weights), 0, 0.0)[0]
        P1, P2 = self.wall.patches
        patches = [((p1 + di) % P1, (p2 + dj) % P2) for (di, dj) in self.offsets]
        return val @ Q.T, patches

    def correction_canonical(self, x_loc: np.ndarray, q_local: np.ndarray,
                             base_patch: tuple, xi: float):
        """Direct quadrature of T^F over the contiguous 9-patch neighbourhood."""
        from .._kernels import double_layer_sum

        p1, p2 = base_patch
        Q, _ = self.patch_transform(p1, p2)
        x_can = self.to_canonical(x_loc, p1, p2)
        rho = self.gather_neighbourhood(p1, p2, q_local)
        fg = self.canon_grid
        val = double_layer_sum(
            np.ascontiguousarray(x_can),
            np.ascontiguousarray(fg.local_nodes),
            np.ascontiguousarray(rho), np.ascontiguousarray(fg.local_normals),
            np.ascontiguousarray(fg.weights), 2, xi)[0]
        return val @ Q.T

    def eval_qbx(self, targets_local: np.ndarray, density: SurfaceDensity):
        """9-patch QBX evaluation at offsurface targets (local frame).

        Same contract as :meth:`ParticleQbxOps.eval_qbx`; the caller adds the
        direct contribution of the remaining patches.
        """
        targets = np.atleast_2d(np.asarray(targets_local, dtype=float))
        p = self.params
        dist, nearest = self.nearest_centre(targets)
        vals = np.zeros((targets.shape[0], 3))
        handled = dist <= p.r_qbx * (1.0 + 1e-12)
        self.fallbacks += int((~handled).sum())
        for flat in np.unique(nearest[handled]):
            rows = np.nonzero(handled & (nearest == flat))[0]
            vals[rows] = self._eval_at_centre(int(flat), targets[rows], density)
        return vals, handled, nearest

    def _eval_at_centre(self, flat, targets, density: SurfaceDensity):
        p = self.params
        p1, p2, a = self.node_patch(flat)
        Q, t = self.patch_transform(p1, p2)
        idx, xs, ns = self.canonical_sites()
        x_can = self.to_canonical(targets, p1, p2)
        if density.constant is not None:
            zb = self.basis_coeffs[a]
            q_can = density.constant @ Q
            z = np.tensordot(q_can, zb, axes=(0, 0))
            centre = xs[a] + p.r_qbx * ns[a]
            exp = DipoleExpansion(centre, p.r_qbx, p.p_qbx, z)
            return eval_expansion_stokes(exp, x_can) @ Q.T
        key = (int(flat), density.version)
        exp = self._coeff_cache.get(key)
        if exp is None:
            if self._coeff_cache and next(iter(self._coeff_cache))[1] != density.version:
                self._coeff_cache.clear()
            fg = self.fine.fine_grid
            rho = self.gather_neighbourhood(p1, p2, density.values)
            qf = self.fine.apply(rho)
            centre = xs[a] + p.r_qbx * ns[a]
            exp = compute_coefficients(
                fg.local_nodes, fg.local_normals, fg.weights, qf,
                centre, p.r_qbx, p.p_qbx, drop_tol=self.drop_tol,
            )
            self._coeff_cache[key] = exp
        return eval_expansion_stokes(exp, x_can) @ Q.T

    def neighbourhood_patches(self, flat: int):
        """Actual patch indices (wrapped) of the node's 9-patch surface."""
        p1, p2, _ = self.node_patch(flat)
        P1, P2 = self.wall.patches
        return [((p1 + di) % P1, (p2 + dj) % P2) for (di, dj) in self.offsets]


def make_qbx_ops(obj, params: SpecialQuadParams, drop_tol: float = DEFAULT_DROP_TOL):
    """Operator factory: particles get particle-global QBX, walls local QBX."""
    if isinstance(obj, (PlaneWall, Pipe)):
        return WallQbxOps(obj, params, drop_tol)
    return ParticleQbxOps(obj, params, drop_tol)
