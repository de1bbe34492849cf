"""Real-space part of the periodic sums.

For a target x and an object image, the screened kernel sum is evaluated
directly when x lies in the image's direct-quadrature region; closer in,
the total-kernel integral is computed with the combined special quadrature
and the smooth remainder T^F is subtracted with the direct rule, cancelling
the discretization error of the FFT part near surfaces:

    near contribution = special_quadrature(T) - direct_quadrature(T^F).

Compact particles are summed over explicit periodic images with
bounding-sphere culling.  Cell-spanning walls and pipes are handled in a
single minimum-image pass: the special piece lives on the contiguous
9-patch neighbourhood (exact across the periodic seam), T^F is subtracted
over that neighbourhood, and the rest of the wall contributes the screened
kernel with minimum-image displacements.  Screened-kernel terms beyond the
cutoff are negligible by construction, so bounding culls are loose.
"""

from __future__ import annotations

import numpy as np

from .._kernels import completion_sum, double_layer_sum_minimage
from ..combined import Region, classify_distance
from ..scene import (
    Instance,
    _direct_sum,
    instance_double_layer,
    wall_local_box,
    wall_special_piece,
    wall_wrap_local,
)
from .config import EwaldConfig


def image_shifts(box, levels: int = 1) -> np.ndarray:
    rng = np.arange(-levels, levels + 1)
    grid = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
    return grid * np.asarray(box, dtype=float)


def _minimage_sum(targets, grid, q, kind, xi, box, mask=None):
    nodes, normals, weights = grid.nodes, grid.normals, grid.weights
    if mask is not None:
        nodes, q, normals, weights = nodes[mask], q[mask], normals[mask], weights[mask]
    return double_layer_sum_minimage(
        np.ascontiguousarray(np.atleast_2d(targets)),
        np.ascontiguousarray(nodes), np.ascontiguousarray(q, dtype=float),
        np.ascontiguousarray(normals), np.ascontiguousarray(weights),
        kind, xi, np.asarray(box, dtype=float))


def _wall_distances(inst: Instance, x_wrapped: np.ndarray) -> np.ndarray:
    from ..geometry.surfaces import PlaneWall

    if isinstance(inst.obj, PlaneWall):
        return np.abs(x_wrapped[:, 2])
    return np.abs(inst.obj.radius - np.hypot(x_wrapped[:, 1], x_wrapped[:, 2]))


def _wall_realspace(inst: Instance, targets: np.ndarray, config: EwaldConfig,
                    out: np.ndarray, force_kappa: int | None = None):
    q = inst.density.values
    box_loc = wall_local_box(inst, config.box)
    x_loc = inst.pose.to_local(targets)
    x_wrap = wall_wrap_local(inst, x_loc, box_loc)
    d = _wall_distances(inst, x_wrap)
    if force_kappa == 1:
        near = np.zeros(d.shape, dtype=bool)
    elif force_kappa is not None:
        near = np.ones(d.shape, dtype=bool)  # probe the forced rule everywhere
    else:
        near = d < inst.params.d_direct
    far_rows = np.nonzero(~near)[0]
    if far_rows.size:
        out[far_rows] += _minimage_sum(targets[far_rows], inst.grid, q, 1,
                                       config.xi, config.box)
    for r in np.nonzero(near)[0]:
        if force_kappa is None:
            region = classify_distance(float(d[r]), inst.params)
        else:
            region = Region("upsampled", 0, force_kappa)
        piece, patches = wall_special_piece(inst, x_wrap[r], region)
        base = inst.qbx.base_patch_of(x_wrap[r])
        corr = inst.qbx.correction_canonical(x_wrap[r], inst.density_local.values,
                                             base, config.xi)
        out[r] += inst.pose.rotate((piece - corr)[None, :])[0]
        covered = inst.patch_node_mask(patches)
        if (~covered).any():
            out[r] += _minimage_sum(targets[r][None, :], inst.grid, q, 1,
                                    config.xi, config.box, mask=~covered)[0]


def _particle_realspace(inst: Instance, targets: np.ndarray, config: EwaldConfig,
                        out: np.ndarray, force_kappa: int | None = None):
    q = inst.density.values
    centre = inst.grid.nodes.mean(axis=0)
    reach = inst.obj.bounding_radius * 1.05 + config.rc
    for shift in image_shifts(config.box):
        rel = targets - shift
        cull = np.linalg.norm(rel - centre, axis=1) <= reach
        if not cull.any():
            continue
        rows = np.nonzero(cull)[0]
        d = inst.surface_distances(rel[rows])
        if force_kappa == 1:
            near = np.zeros(d.shape, dtype=bool)
        elif force_kappa is not None:
            near = np.ones(d.shape, dtype=bool)
        else:
            near = d < inst.params.d_direct
        far_rows = rows[~near]
        if far_rows.size:
            out[far_rows] += _direct_sum(rel[far_rows], inst.grid.nodes, q,
                                         inst.grid.normals, inst.grid.weights,
                                         kind=1, xi=config.xi)
        near_rows = rows[near]
        if near_rows.size:
            if force_kappa is None:
                vals = instance_double_layer(inst, rel[near_rows], distances=d[near])
            else:
                ups, nodes, normals, weights = inst.fine_surface(force_kappa)
                vals = _direct_sum(rel[near_rows], nodes, ups.apply(q),
                                   normals, weights)
            vals -= _direct_sum(rel[near_rows], inst.grid.nodes, q,
                                inst.grid.normals, inst.grid.weights,
                                kind=2, xi=config.xi)
            out[near_rows] += vals


def realspace_double_layer(targets, instances, config: EwaldConfig,
                           force_kappa: dict | None = None) -> np.ndarray:
    """Screened/corrected real-space double layer of all instances.

    ``force_kappa`` maps an instance to an upsampling factor overriding the
    region dispatch for its near targets (1 = plain direct rule); used by
    the parameter-selection probes.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    out = np.zeros((targets.shape[0], 3))
    for inst in instances:
        fk = None if force_kappa is None else force_kappa.get(inst.name)
        if inst.is_wall:
            _wall_realspace(inst, targets, config, out, fk)
        else:
            _particle_realspace(inst, targets, config, out, fk)
    return out


def realspace_completion(targets, source_sets, config: EwaldConfig) -> np.ndarray:
    """Screened stokeslet/rotlet image sums of the completion sources."""
    targets = np.ascontiguousarray(np.atleast_2d(np.asarray(targets, dtype=float)))
    out = np.zeros((targets.shape[0], 3))
    shifts = image_shifts(config.box)
    for cs in source_sets:
        pts = cs.points
        f, t = cs.strengths()
        for shift in shifts:
            out += completion_sum(
                targets - shift, np.ascontiguousarray(pts),
                np.ascontiguousarray(f), np.ascontiguousarray(t),
                1, config.xi)
    return out
