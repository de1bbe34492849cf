"""Spherical harmonics and solid harmonics with analytic Cartesian gradients.

Convention: Y_l^m(theta, phi) = K_lm P_l^m(cos theta) e^{i m phi} with the
fully normalized K_lm = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) and associated
Legendre functions WITHOUT the Condon-Shortley sign, so that
Y_l^{-m} = conj(Y_l^m) and sum_m |Y_l^m|^2 = (2l+1)/(4 pi).

Regular solid harmonics r^l Y_l^m and irregular ones r^{-(l+1)} Y_l^m are
generated by Cartesian recurrences (pole-safe; no trigonometric coordinate
singularities), and their gradients follow from ladder identities on the
unnormalized solids C_l^m = r^l P_l^m e^{i m phi}, G_l^m = C_l^m / r^{2l+1}:

    dC/dz = (l+m) C_{l-1}^m          dG/dz = -(l-m+1) G_{l+1}^m
    d+ C  = -C_{l-1}^{m+1}           d+ G  = -G_{l+1}^{m+1}
    d- C  = (l+m)(l+m-1) C_{l-1}^{m-1}
    d- G  = (l-m+1)(l-m+2) G_{l+1}^{m-1}

with d+- = d/dx +- i d/dy; for m = 0 the d- value is -conj of the d+ value.
Coefficients are stored for m >= 0 only (index l(l+1)/2 + m).
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln


def n_coeffs(p: int) -> int:
    """Number of (l, m>=0) pairs with l <= p."""
    return (p + 1) * (p + 2) // 2


def lm_index(l: int, m: int) -> int:
    return l * (l + 1) // 2 + m


def normalization(p: int) -> np.ndarray:
    """K_lm for all l <= p, m >= 0 (flat (l, m) order)."""
    out = np.empty(n_coeffs(p))
    for l in range(p + 1):
        m = np.arange(l + 1)
        out[lm_index(l, 0): lm_index(l, l) + 1] = np.sqrt(
            (2 * l + 1) / (4.0 * np.pi)
            * np.exp(gammaln(l - m + 1) - gammaln(l + m + 1))
        )
    return out


def _unnormalized_regular(p: int, pts: np.ndarray) -> np.ndarray:
    """C_l^m = r^l P_l^m(cos) e^{imphi} via Cartesian recurrences; (Nq, n)."""
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    u = x + 1j * y
    r2 = x * x + y * y + z * z
    n = pts.shape[0]
    C = np.zeros((n_coeffs(p), n), dtype=complex)
    C[0] = 1.0
    for m in range(1, p + 1):
        C[lm_index(m, m)] = (2 * m - 1) * u * C[lm_index(m - 1, m - 1)]
    for m in range(0, p):
        C[lm_index(m + 1, m)] = (2 * m + 1) * z * C[lm_index(m, m)]
    for m in range(0, p + 1):
        for l in range(m + 2, p + 1):
            C[lm_index(l, m)] = (
                (2 * l - 1) * z * C[lm_index(l - 1, m)]
                - (l + m - 1) * r2 * C[lm_index(l - 2, m)]
            ) / (l - m)
    return C


def _unnormalized_irregular(p: int, pts: np.ndarray) -> np.ndarray:
    """G_l^m = P_l^m(cos) e^{imphi} / r^{l+1}; (Nq, n)."""
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    u = x + 1j * y
    r2 = x * x + y * y + z * z
    if np.any(r2 == 0):
        raise ZeroDivisionError("irregular solid harmonics diverge at the origin")
    n = pts.shape[0]
    G = np.zeros((n_coeffs(p), n), dtype=complex)
    G[0] = 1.0 / np.sqrt(r2)
    for m in range(1, p + 1):
        G[lm_index(m, m)] = (2 * m - 1) * u * G[lm_index(m - 1, m - 1)] / r2
    for m in range(0, p):
        G[lm_index(m + 1, m)] = (2 * m + 1) * z * G[lm_index(m, m)] / r2
    for m in range(0, p + 1):
        for l in range(m + 2, p + 1):
            G[lm_index(l, m)] = (
                (2 * l - 1) * z * G[lm_index(l - 1, m)]
                - (l + m - 1) * G[lm_index(l - 2, m)]
            ) / ((l - m) * r2)
    return G


def spherical_harmonics(p: int, theta, phi) -> np.ndarray:
    """Y_l^m at directions (theta, phi), m >= 0; shape (n_coeffs, n)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    pts = np.stack(
        [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)],
        axis=1,
    )
    C = _unnormalized_regular(p, pts)  # on the unit sphere C_l^m = P_l^m e^{imphi}
    return normalization(p)[:, None] * C


def regular_solid(p: int, pts: np.ndarray, gradients: bool = False):
    """Normalized regular solids r^l Y_l^m and optionally their gradients.

    Returns ``S`` with shape (n_coeffs(p), n) and, if requested, ``dS`` with
    shape (n_coeffs(p), 3, n).
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    K = normalization(p)
    C = _unnormalized_regular(p + 0, pts)
    S = K[:, None] * C
    if not gradients:
        return S
    dS = np.zeros((n_coeffs(p), 3, pts.shape[0]), dtype=complex)
    for l in range(p + 1):
        for m in range(l + 1):
            i = lm_index(l, m)
            dz = (l + m) * _get(C, l - 1, m)
            dp = -_get(C, l - 1, m + 1)
            if m >= 1:
                dm = (l + m) * (l + m - 1) * _get(C, l - 1, m - 1)
            else:
                dm = -np.conj(_get(C, l - 1, 1))
            dS[i, 0] = 0.5 * (dp + dm)
            dS[i, 1] = -0.5j * (dp - dm)
            dS[i, 2] = dz
    return S, K[:, None, None] * dS


def irregular_solid(p: int, pts: np.ndarray, gradients: bool = False):
    """Normalized irregular solids r^{-(l+1)} Y_l^m and optional gradients."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    K = normalization(p)
    G = _unnormalized_irregular(p + 1, pts)
    I = K[:, None] * G[: n_coeffs(p)]
    if not gradients:
        return I
    dI = np.zeros((n_coeffs(p), 3, pts.shape[0]), dtype=complex)
    for l in range(p + 1):
        for m in range(l + 1):
            i = lm_index(l, m)
            dz = -(l - m + 1) * _get(G, l + 1, m)
            dp = -_get(G, l + 1, m + 1)
            if m >= 1:
                dm = (l - m + 1) * (l - m + 2) * _get(G, l + 1, m - 1)
            else:
                dm = -np.conj(_get(G, l + 1, 1))
            dI[i, 0] = 0.5 * (dp + dm)
            dI[i, 1] = -0.5j * (dp - dm)
            dI[i, 2] = dz
    return I, K[:, None, None] * dI


def _get(table: np.ndarray, l: int, m: int):
    if m < 0 or l < 0 or m > l:
        return 0.0
    return table[lm_index(l, m)]


def eval_ylm_and_solid_harmonics(p: int, pts, kind: str = "regular"):
    """Public entry: solid harmonics of either kind with gradients.

    ``kind='regular'`` returns (r^l Y_l^{-m} basis is the conjugate of the
    returned m >= 0 values), ``kind='irregular'`` returns r^{-(l+1)} Y_l^m.
    """
    if kind == "regular":
        return regular_solid(p, pts, gradients=True)
    if kind == "irregular":
        return irregular_solid(p, pts, gradients=True)
    raise ValueError(f"unknown solid harmonic kind {kind!r}")
