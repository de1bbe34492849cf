"""Summation-order term of the conditionally convergent stresslet sum.

Zeroing the k = 0 mode makes the computed periodic double layer mean-free
over the cell.  The physically meaningful summation order for confined
geometries builds the infinite wall (slab-wise) or infinite pipe (axis-wise)
first; the two conventions differ by a constant velocity

    u_i = -(1/V) C_ijld  sum_s w_s q_j(s) n_l(s) (y_s - B/2)_d,

where C_ijld = lim over the exhaustion shape of the boundary integral of
T_ijl nu_d.  Only the shape of the exhaustion enters C: two infinite planes
for a slab, the four side strips of an infinite tube for a pipe.  For closed
particle surfaces the correction is shape-independent (sum_l C_ijll =
-8 pi delta_ij, the stresslet identity on the exhaustion boundary), so it
exactly restores the absolutely convergent value of their image sums.
Unconfined systems keep the zero-mean gauge (no correction).
"""

from __future__ import annotations

import numpy as np

from ..quadrature import gauss_legendre, trapezoidal


def _plane_integral(h: float) -> np.ndarray:
    """int_{plane x3 = h} T_ijl(x1, x2, h) dx1 dx2 (local axes: 3 = normal)."""
    t_rule = gauss_legendre(160, 0.0, 0.5 * np.pi - 1e-13)
    phi_rule = trapezoidal(64)
    rho = h * np.tan(t_rule.nodes)
    drho = h / np.cos(t_rule.nodes) ** 2
    out = np.zeros((3, 3, 3))
    cphi, sphi = np.cos(phi_rule.nodes), np.sin(phi_rule.nodes)
    for tr, dr, wt in zip(rho, drho, t_rule.weights):
        r = np.stack([tr * cphi, tr * sphi, np.full_like(cphi, h)], axis=1)
        d = np.linalg.norm(r, axis=1)
        T = -6.0 * np.einsum("ni,nj,nl->nijl", r, r, r) / d[:, None, None, None] ** 5
        out += np.einsum("nijl,n->ijl", T, phi_rule.weights) * tr * dr * wt
    return out


def slab_gauge_tensor(normal_axis: int) -> np.ndarray:
    """C_ijld for slab-wise exhaustion (plane-wall pair normal to an axis)."""
    plane = 2.0 * _plane_integral(0.5)  # both faces contribute equally
    C = np.zeros((3, 3, 3, 3))
    # map local axes (1, 2, normal) onto global with `normal_axis` as normal
    perm = [a for a in range(3) if a != normal_axis] + [normal_axis]
    for i in range(3):
        for j in range(3):
            for l in range(3):
                C[perm[i], perm[j], perm[l], normal_axis] = plane[i, j, l]
    return C


def _strip_integral(u: float, half_v: float, axis_comp: int) -> np.ndarray:
    """int over the strip {x1 in R, |v| <= half_v, u fixed} of T_ijl dx1 dv.

    Local axes: 1 = tube axis, 2 = strip normal (coordinate u), 3 = v.
    ``axis_comp`` selects how the strip is oriented (2 or 3 as normal).
    """
    t_rule = gauss_legendre(160, 0.0, 0.5 * np.pi - 1e-13)
    v_rule = gauss_legendre(96, -half_v, half_v)
    s = u * np.tan(t_rule.nodes)
    ds = u / np.cos(t_rule.nodes) ** 2
    out = np.zeros((3, 3, 3))
    for sv, wv in zip(v_rule.nodes, v_rule.weights):
        if axis_comp == 2:
            r = np.stack([s, np.full_like(s, u), np.full_like(s, sv)], axis=1)
        else:
            r = np.stack([s, np.full_like(s, sv), np.full_like(s, u)], axis=1)
        d = np.linalg.norm(r, axis=1)
        T = -6.0 * np.einsum("ni,nj,nl->nijl", r, r, r) / d[:, None, None, None] ** 5
        # x1 runs over the whole axis: even part doubles, odd part cancels
        Tm = -6.0 * np.einsum("ni,nj,nl->nijl", r * np.array([-1, 1, 1]),
                              r * np.array([-1, 1, 1]), r * np.array([-1, 1, 1])
                              ) / d[:, None, None, None] ** 5
        out += np.einsum("nijl,n->ijl", T + Tm, ds * t_rule.weights) * wv
    return out


def tube_gauge_tensor(axis: int, box) -> np.ndarray:
    """C_ijld for axis-wise exhaustion (pipe along ``axis``)."""
    box = np.asarray(box, dtype=float)
    lat = [a for a in range(3) if a != axis]
    C = np.zeros((3, 3, 3, 3))
    for which, d_axis in enumerate(lat):
        other = lat[1 - which]
        half_u = 0.5 * box[d_axis]
        half_v = 0.5 * box[other]
        strip = 2.0 * _strip_integral(half_u, half_v, 2)  # both +- faces
        # local (1=axis, 2=strip normal=d_axis, 3=other)
        perm = {0: axis, 1: d_axis, 2: other}
        for i in range(3):
            for j in range(3):
                for l in range(3):
                    C[perm[i], perm[j], perm[l], d_axis] = strip[i, j, l]
    return C


def gauge_velocity(C: np.ndarray, instances, box) -> np.ndarray:
    """Constant velocity restoring the confined summation order."""
    box = np.asarray(box, dtype=float)
    V = float(np.prod(box))
    D = np.zeros((3, 3, 3))
    for inst in instances:
        y = inst.grid.nodes - 0.5 * box
        q = inst.density.values
        n = inst.grid.normals
        w = inst.grid.weights
        D += np.einsum("s,sj,sl,sd->jld", w, q, n, y)
    return -np.einsum("ijld,jld->i", C, D) / V
