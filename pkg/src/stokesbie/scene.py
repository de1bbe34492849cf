"""Object instances and combined-quadrature evaluation of the double layer.

An instance couples a shape (with its rigid pose) to shared shape-level
operators: upsamplers, QBX data and special-quadrature thresholds.  Shape
operators live in the local frame; instance evaluation maps targets into the
local frame and rotates velocities back.

``evaluate_combined`` dispatches every (target, object) pair by distance:
direct quadrature far away, upsampled quadrature at intermediate distance
(whole-particle for particles, the N_P nearest patches for walls), QBX
closest to the surface (particle-global, or local over the N_P nearest
patches with the remaining patches summed directly).  Contributions
superpose over objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._kernels import double_layer_sum
from .combined import Region, SpecialQuadParams, classify_distance
from .geometry import wall_patch_upsampler
from .geometry.surfaces import Pipe, PlaneWall
from .qbx import SurfaceDensity, make_qbx_ops


def _is_wall(obj) -> bool:
    return isinstance(obj, (PlaneWall, Pipe))


class Instance:
    """One placed object with its density and shared shape operators."""

    def __init__(self, obj, params: SpecialQuadParams, qbx_ops=None, name: str = ""):
        self.obj = obj
        self.name = name or obj.shape_key()
        self.params = params
        self.pose = obj.pose
        self.qbx = qbx_ops if qbx_ops is not None else make_qbx_ops(obj, params)
        self.grid = obj.discretize(self.pose)
        self.is_wall = _is_wall(obj)
        self._ups_fine_global = {}
        self._wall_ups = {}
        self._meridian_tree = None
        self._density = None
        self._density_local = None
        self._version = 0

    # -- density -------------------------------------------------------------
    def set_density(self, values_global: np.ndarray, constant=None):
        values_global = np.asarray(values_global, dtype=float)
        self._version += 1
        R = self.pose.matrix
        const_loc = None if constant is None else np.asarray(constant, float) @ R
        self._density = SurfaceDensity(values_global, None if constant is None
                                       else np.asarray(constant, float), self._version)
        self._density_local = SurfaceDensity(values_global @ R, const_loc, self._version)

    def set_constant_density(self, q_tilde):
        q_tilde = np.asarray(q_tilde, dtype=float)
        self.set_density(np.tile(q_tilde, (self.grid.n_nodes, 1)), constant=q_tilde)

    @property
    def density(self) -> SurfaceDensity:
        if self._density is None:
            raise ValueError(f"instance {self.name} has no density set")
        return self._density

    @property
    def density_local(self) -> SurfaceDensity:
        if self._density_local is None:
            raise ValueError(f"instance {self.name} has no density set")
        return self._density_local

    # -- geometry helpers ------------------------------------------------------
    def surface_distances(self, targets_global: np.ndarray) -> np.ndarray:
        """Classification-grade signed-free distances to the surface."""
        x_loc = self.pose.to_local(np.atleast_2d(targets_global))
        if self.is_wall:
            if isinstance(self.obj, PlaneWall):
                return np.abs(x_loc[:, 2])
            return np.abs(self.obj.radius - np.hypot(x_loc[:, 1], x_loc[:, 2]))
        rho = np.hypot(x_loc[:, 0], x_loc[:, 1])
        d, _ = self._meridian().query(np.stack([rho, x_loc[:, 2]], axis=1))
        return d

    def contains(self, targets_global: np.ndarray) -> np.ndarray:
        """True for targets strictly inside a particle (False for walls)."""
        x_loc = self.pose.to_local(np.atleast_2d(targets_global))
        if self.is_wall:
            return np.zeros(x_loc.shape[0], dtype=bool)
        rho = np.hypot(x_loc[:, 0], x_loc[:, 1])
        pts = np.stack([rho, x_loc[:, 2]], axis=1)
        _, idx = self._meridian().query(pts)
        mer, nrm = self._meridian_data
        rel = pts - mer[idx]
        return np.einsum("nk,nk->n", rel, nrm[idx]) < 0.0

    def _meridian(self) -> cKDTree:
        if self._meridian_tree is None:
            theta = np.linspace(1e-9, np.pi - 1e-9, 4096)
            rho, beta = self.obj.meridian(theta)
            drho, dbeta = self.obj.meridian_derivatives(theta)
            speed = np.hypot(drho, dbeta)
            nrm = np.stack([-dbeta / speed, drho / speed], axis=1)
            self._meridian_data = (np.stack([rho, beta], axis=1), nrm)
            self._meridian_tree = cKDTree(self._meridian_data[0])
        return self._meridian_tree

    # -- upsampled machinery ---------------------------------------------------
    def fine_surface(self, kappa: int):
        """Global fine grid (nodes, normals, weights) and the interpolator."""
        hit = self._ups_fine_global.get(kappa)
        if hit is None:
            ups = self.obj.build_upsampler(kappa)
            fg = ups.fine_grid
            nodes = self.pose.to_global(fg.local_nodes)
            normals = self.pose.rotate(fg.local_normals)
            hit = (ups, nodes, normals, fg.weights)
            self._ups_fine_global[kappa] = hit
        return hit

    def wall_patch_fine(self, patches: tuple, kappa: int):
        key = (patches, kappa)
        hit = self._wall_ups.get(key)
        if hit is None:
            ups = wall_patch_upsampler(self.obj, kappa, list(patches))
            fg = ups.fine_grid
            nodes = self.pose.to_global(fg.local_nodes)
            normals = self.pose.rotate(fg.local_normals)
            mask = np.isin(self.grid.patch_index,
                           [p1 * self.obj.patches[1] + p2 for (p1, p2) in patches])
            hit = (ups, nodes, normals, fg.weights, mask)
            self._wall_ups[key] = hit
        return hit

    def patch_node_mask(self, patches) -> np.ndarray:
        P2 = self.obj.patches[1]
        return np.isin(self.grid.patch_index, [p1 * P2 + p2 for (p1, p2) in patches])


def _direct_sum(targets, nodes, q, normals, weights, kind=0, xi=0.0):
    return double_layer_sum(
        np.ascontiguousarray(np.atleast_2d(targets)),
        np.ascontiguousarray(nodes),
        np.ascontiguousarray(q, dtype=float),
        np.ascontiguousarray(normals),
        np.ascontiguousarray(weights),
        kind,
        xi,
    )


def instance_double_layer(inst: Instance, targets: np.ndarray,
                          node_mask: np.ndarray | None = None,
                          distances: np.ndarray | None = None) -> np.ndarray:
    """Combined-quadrature double layer of one instance at targets.

    ``node_mask`` restricts the integration surface to a node subset (used by
    the periodic real-space correction to truncate walls at the cutoff); the
    special quadrature of a wall always uses the full patch neighbourhood.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    q = inst.density.values
    out = np.zeros((targets.shape[0], 3))
    d = inst.surface_distances(targets) if distances is None else distances
    regions = [classify_distance(float(di), inst.params) for di in d]
    kinds = np.array([0 if r.kind == "direct" else (1 if r.kind == "upsampled" else 2)
                      for r in regions])

    sel_direct = kinds == 0
    if sel_direct.any():
        if node_mask is None:
            out[sel_direct] = _direct_sum(targets[sel_direct], inst.grid.nodes, q,
                                          inst.grid.normals, inst.grid.weights)
        else:
            out[sel_direct] = _direct_sum(
                targets[sel_direct], inst.grid.nodes[node_mask], q[node_mask],
                inst.grid.normals[node_mask], inst.grid.weights[node_mask])

    if inst.is_wall:
        _wall_special(inst, targets, q, kinds, regions, node_mask, out)
    else:
        _particle_special(inst, targets, q, kinds, regions, out)
    return out


def _particle_special(inst, targets, q, kinds, regions, out):
    params = inst.params
    for i_reg in range(params.n_upsampled):
        sel = np.array([k == 1 and r.index == i_reg for k, r in zip(kinds, regions)])
        if not sel.any():
            continue
        _particle_upsampled(inst, targets[sel], q, params.kappa_upsampled[i_reg],
                            out, sel)
    sel_qbx = kinds == 2
    if sel_qbx.any():
        x_loc = inst.pose.to_local(targets[sel_qbx])
        vals_loc, handled = inst.qbx.eval_qbx(x_loc, inst.density_local)
        vals = inst.pose.rotate(vals_loc)
        rows = np.nonzero(sel_qbx)[0]
        out[rows[handled]] = vals[handled]
        if (~handled).any():
            # outside every ball of convergence: innermost upsampled rule
            kap = params.kappa_upsampled[-1] if params.kappa_upsampled else 2
            miss = np.zeros(len(kinds), dtype=bool)
            miss[rows[~handled]] = True
            _particle_upsampled(inst, targets[miss], q, kap, out, miss)


def _particle_upsampled(inst, targets_sel, q, kappa, out, sel):
    ups, nodes, normals, weights = inst.fine_surface(kappa)
    qf = ups.apply(q)
    out[sel] = _direct_sum(targets_sel, nodes, qf, normals, weights)


def wall_special_piece(inst, t_loc_wrapped: np.ndarray, region: Region):
    """Special-quadrature 9-patch contribution of a wall at one local target.

    Returns (value_local, covered_patches).  Evaluated in the canonical
    contiguous patch frame, so periodic wrap is exact.  Targets in the QBX
    region that miss every ball of convergence fall back to the innermost
    upsampled rule.
    """
    q_loc = inst.density_local.values
    params = inst.params
    if region.kind == "qbx":
        vals_loc, handled, nearest = inst.qbx.eval_qbx(t_loc_wrapped[None, :],
                                                       inst.density_local)
        if handled[0]:
            return vals_loc[0], inst.qbx.neighbourhood_patches(int(nearest[0]))
        region = Region("upsampled", max(params.n_upsampled - 1, 0),
                        params.kappa_upsampled[-1] if params.kappa_upsampled else 2)
    return inst.qbx.eval_upsampled_canonical(t_loc_wrapped, q_loc, region.kappa)


def _wall_special(inst, targets, q, kinds, regions, node_mask, out):
    """Free-space wall dispatch: special 9-patch piece plus direct rest."""
    special = kinds >= 1
    if not special.any():
        return
    rows = np.nonzero(special)[0]
    x_loc = inst.pose.to_local(targets[rows])
    full_mask = np.ones(inst.grid.n_nodes, dtype=bool) if node_mask is None else node_mask
    for r, t_glob, t_loc in zip(rows, targets[rows], x_loc):
        piece, patches = wall_special_piece(inst, t_loc, regions[r])
        out[r] += inst.pose.rotate(piece[None, :])[0]
        near = inst.patch_node_mask(patches)
        rest = full_mask & ~near
        if rest.any():
            out[r] += _direct_sum(t_glob[None, :], inst.grid.nodes[rest], q[rest],
                                  inst.grid.normals[rest], inst.grid.weights[rest])[0]
        over = near & ~full_mask
        if over.any():
            out[r] -= _direct_sum(t_glob[None, :], inst.grid.nodes[over], q[over],
                                  inst.grid.normals[over], inst.grid.weights[over])[0]


def wall_wrap_local(inst, x_loc: np.ndarray, box_local: np.ndarray) -> np.ndarray:
    """Wrap local wall coordinates to the primary-cell representative."""
    x = np.array(x_loc, dtype=float, copy=True)
    if isinstance(inst.obj, PlaneWall):
        x[:, 0] %= inst.obj.L1
        x[:, 1] %= inst.obj.L2
        b3 = box_local[2]
        x[:, 2] -= b3 * np.rint(x[:, 2] / b3)
    else:
        x[:, 0] %= inst.obj.length
        for c in (1, 2):
            x[:, c] -= box_local[c] * np.rint(x[:, c] / box_local[c])
    return x


def wall_local_box(inst, box) -> np.ndarray:
    """Cell box lengths expressed along the wall's local axes."""
    return np.abs(np.asarray(box, dtype=float) @ np.abs(inst.pose.matrix))


def evaluate_combined(targets, instances, allow_interior: bool = False) -> np.ndarray:
    """Free-space combined special quadrature, superposed over instances."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if not allow_interior:
        for inst in instances:
            if inst.contains(targets).any():
                raise ValueError(f"target inside particle {inst.name}")
    out = np.zeros((targets.shape[0], 3))
    for inst in instances:
        out += instance_double_layer(inst, targets)
    return out
