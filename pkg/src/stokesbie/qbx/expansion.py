"""Local expansions of the Stokes double layer potential.

The double layer is expressed through four Laplace dipole potentials
L[rho^(j)] with densities

    rho^(j) = q_j n + n_j q   (j = 1, 2, 3),
    rho^(4) = (y . q) n + (y . n) q,

combined as D_i = (x_j d/dx_i - delta_ij) L[rho^(j)] - d/dx_i L[rho^(4)].
Each dipole potential is expanded about a centre c in solid harmonics,

    L(x) = sum_{l,m} r_x^l Y_l^{-m}(x_hat) z_lm,
    z_lm = 4 pi/(2l+1) int rho . grad_y [ r_y^{-(l+1)} Y_l^m(y_hat) ] dS,

valid in the ball |x - c| <= r_QBX = dist(c, Gamma), including its boundary.
Coefficients are stored for m >= 0 (z_{l,-m} = conj(z_lm)); coordinates are
scaled by r_QBX so the recurrences stay well-conditioned at high degree.

Coefficient quadrature runs on the kappa_QBX-upsampled grid.  Sources far
from the centre contribute only to low degrees ((r_QBX/r_y)^l decay), so the
recurrence depth is truncated per source at the degree where the dropped
tail falls below a drop tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._kernels import qbx_coefficient_pass, qbx_onsurface_kernel_pass
from ..harmonics import irregular_solid, lm_index, n_coeffs, normalization, regular_solid

#: per-source degree-truncation drop tolerance (relative to the kept terms)
DEFAULT_DROP_TOL = 1e-18


@dataclass
class DipoleExpansion:
    """Truncated expansions of the four dipole potentials about one centre."""

    centre: np.ndarray
    radius: float
    order: int
    coeffs: np.ndarray  # (4, n_coeffs) complex, m >= 0

    def __post_init__(self):
        self.centre = np.asarray(self.centre, dtype=float)
        if self.coeffs.shape != (4, n_coeffs(self.order)):
            raise ValueError("coefficient array does not match the order")


def dipole_densities(q: np.ndarray, nodes: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """The four dipole densities rho^(1..4); shape (4, N, 3).

    ``nodes`` enters rho^(4) explicitly and must be in the same frame used
    for evaluation.
    """
    q = np.asarray(q, dtype=float)
    rho = np.empty((4, q.shape[0], 3))
    for j in range(3):
        rho[j] = q[:, j, None] * normals + normals[:, j, None] * q
    yq = np.einsum("nk,nk->n", nodes, q)
    yn = np.einsum("nk,nk->n", nodes, normals)
    rho[3] = yq[:, None] * normals + yn[:, None] * q
    return rho


def coefficient_prefactors(p: int, r0: float) -> np.ndarray:
    """4 pi/(2l+1) K_lm / r0^2 for the scaled-coordinate coefficient pass."""
    pref = normalization(p).copy()
    for l in range(p + 1):
        pref[lm_index(l, 0): lm_index(l, l) + 1] *= 4.0 * np.pi / (2 * l + 1)
    return pref / r0**2


def degree_cutoffs(dist_scaled: np.ndarray, p: int,
                   drop_tol: float = DEFAULT_DROP_TOL) -> np.ndarray:
    """Per-source maximum degree: (1/r_hat)^(l+2) tails below ``drop_tol``."""
    r = np.asarray(dist_scaled, dtype=float)
    out = np.full(r.shape, p, dtype=np.int64)
    far = r > 1.05
    need = np.ceil(-np.log(drop_tol) / np.log(r[far])).astype(np.int64) + 4
    out[far] = np.minimum(p, need)
    return out


def compute_coefficients(fine_nodes, fine_normals, fine_weights, q_fine,
                         centre, r0: float, p: int,
                         drop_tol: float | None = DEFAULT_DROP_TOL) -> DipoleExpansion:
    """Expansion coefficients from an (upsampled) source grid.

    ``q_fine`` may be a single density (N, 3) or a batch (B, N, 3); a batch
    returns an array (B, 4, n_coeffs) instead of a DipoleExpansion.
    """
    centre = np.asarray(centre, dtype=float)
    fine_nodes = np.ascontiguousarray(fine_nodes, dtype=float)
    q_fine = np.asarray(q_fine, dtype=float)
    batched = q_fine.ndim == 3
    qb = np.ascontiguousarray(q_fine if batched else q_fine[None])
    rel = fine_nodes - centre
    dist = np.sqrt((rel**2).sum(1)) / r0
    if np.any(dist <= 0):
        raise ValueError("expansion centre lies on the source grid")
    if drop_tol is None:
        lcut = np.full(dist.shape, p, dtype=np.int64)
    else:
        lcut = degree_cutoffs(dist, p, drop_tol)
    z = qbx_coefficient_pass(
        fine_nodes,
        np.ascontiguousarray(fine_normals, dtype=float),
        np.ascontiguousarray(fine_weights, dtype=float),
        qb,
        centre,
        r0,
        p,
        lcut,
        coefficient_prefactors(p, r0),
    )
    if batched:
        return z
    return DipoleExpansion(centre, r0, p, z[0])


def compute_coefficients_reference(fine_nodes, fine_normals, fine_weights, q_fine,
                                   centre, r0: float, p: int) -> DipoleExpansion:
    """Dense numpy implementation of the coefficient quadrature (oracle)."""
    centre = np.asarray(centre, dtype=float)
    rel = (np.asarray(fine_nodes) - centre) / r0
    _, grad = irregular_solid(p, rel, gradients=True)  # already K_lm-normalized
    pref = np.empty(n_coeffs(p))
    for l in range(p + 1):
        pref[lm_index(l, 0): lm_index(l, l) + 1] = 4.0 * np.pi / (2 * l + 1)
    pref /= r0**2
    rho = dipole_densities(np.asarray(q_fine), np.asarray(fine_nodes),
                           np.asarray(fine_normals))
    w = np.asarray(fine_weights)
    z = np.einsum("q,jnc,qcn,n->jq", pref, rho, grad, w, optimize=True)
    return DipoleExpansion(centre, r0, p, z)


def _fold_factors(p: int) -> np.ndarray:
    """1 for m = 0, 2 for m > 0 (m >= 0 storage of conjugate-paired terms)."""
    c = np.ones(n_coeffs(p))
    for l in range(p + 1):
        c[lm_index(l, 1): lm_index(l, l) + 1] = 2.0
    return c


def eval_expansion_stokes(expansion: DipoleExpansion, targets,
                          order: int | None = None) -> np.ndarray:
    """Evaluate the double layer from the four dipole expansions.

    Targets must lie inside (or on) the ball of convergence; coordinates are
    in the same frame the coefficients were computed in.  ``order`` trims the
    evaluation to a lower degree than stored (used by parameter sweeps).
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    c = expansion.centre
    r0 = expansion.radius
    p = expansion.order if order is None else int(order)
    if order is not None and order > expansion.order:
        raise ValueError("evaluation order exceeds stored order")
    rel = (targets - c) / r0
    rad = np.sqrt((rel**2).sum(1))
    if np.any(rad > 1.0 + 1e-12):
        raise ValueError("target outside the ball of convergence")
    S, dS = regular_solid(p, rel, gradients=True)
    nq = n_coeffs(p)
    fold = _fold_factors(p)
    z = expansion.coeffs[:, :nq]
    E = fold[:, None] * np.conj(S)  # (nq, M)
    dE = fold[:, None, None] * np.conj(dS) / r0  # (nq, 3, M) physical gradient
    L = np.real(np.einsum("jq,qm->jm", z, E))
    dL = np.real(np.einsum("jq,qcm->jcm", z, dE))
    # D_i = x_j dL_j/dx_i - L_i - dL_4/dx_i
    u = np.einsum("mj,jim->mi", targets, dL[:3])
    u -= L[:3].T
    u -= dL[3].T
    return u


def eval_dipole_potential(expansion: DipoleExpansion, targets, j: int = 0,
                          order: int | None = None) -> np.ndarray:
    """Evaluate a single dipole potential L[rho^(j)] (diagnostics, tests)."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    p = expansion.order if order is None else int(order)
    rel = (targets - expansion.centre) / expansion.radius
    S = regular_solid(p, rel, gradients=False)
    fold = _fold_factors(p)
    z = expansion.coeffs[j, : n_coeffs(p)]
    return np.real(np.einsum("q,qm->m", z, fold[:, None] * np.conj(S)))


def onsurface_target_matrices(x_target, centre, r0: float, p: int):
    """Evaluation-side combinations (emat, evec) for one onsurface target.

    emat[lm, c, j] multiplies z_lm^(j), evec[lm, c] multiplies z_lm^(4) in
    D_c = sum_lm Re(emat . z - evec z_4); the m >= 0 doubling is folded in.
    """
    x = np.asarray(x_target, dtype=float)
    rel = (x - np.asarray(centre, dtype=float)) / r0
    S, dS = regular_solid(p, rel[None, :], gradients=True)
    fold = _fold_factors(p)
    e0 = fold * np.conj(S[:, 0])
    eg = fold[:, None] * np.conj(dS[:, :, 0]) / r0  # (nq, 3)
    nq = n_coeffs(p)
    emat = np.empty((nq, 3, 3), dtype=complex)
    for cidx in range(3):
        for j in range(3):
            emat[:, cidx, j] = x[j] * eg[:, cidx] - (1.0 if cidx == j else 0.0) * e0
    return np.ascontiguousarray(emat), np.ascontiguousarray(eg)


def onsurface_kernel(fine_nodes, fine_normals, fine_weights, centre, r0: float,
                     p: int, x_target, drop_tol: float | None = DEFAULT_DROP_TOL):
    """Fine-grid quadrature kernel K (N, 3, 3) mapping a fine density to the
    double layer value at one onsurface target from one expansion centre."""
    fine_nodes = np.ascontiguousarray(fine_nodes, dtype=float)
    centre = np.asarray(centre, dtype=float)
    rel = fine_nodes - centre
    dist = np.sqrt((rel**2).sum(1)) / r0
    if drop_tol is None:
        lcut = np.full(dist.shape, p, dtype=np.int64)
    else:
        lcut = degree_cutoffs(dist, p, drop_tol)
    emat, evec = onsurface_target_matrices(x_target, centre, r0, p)
    return qbx_onsurface_kernel_pass(
        fine_nodes,
        np.ascontiguousarray(fine_normals, dtype=float),
        np.ascontiguousarray(fine_weights, dtype=float),
        centre,
        r0,
        p,
        lcut,
        coefficient_prefactors(p, r0),
        emat,
        evec,
    )
