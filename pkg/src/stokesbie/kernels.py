"""Pointwise Stokes kernels and their Ewald splits.

Free-space kernels: stokeslet S_ij = delta_ij/r + r_i r_j/r^3, rotlet
R_ij = eps_ijk r_k/r^3, stresslet T_ijl = -6 r_i r_j r_l / r^5.

The triply periodic sums use a screened decomposition K = K^R + K^F with
split parameter xi: K^R decays like a Gaussian in real space and K^F has
Gaussian-decaying Fourier coefficients.  The stresslet real-space part and
its Fourier-space factor are implemented explicitly; the smooth remainder
T^F = T - T^R is evaluated by subtraction, switching to a Taylor limit for
xi*|r| < 1e-4 where subtraction would cancel catastrophically.  The
stokeslet split is Hasimoto's; the rotlet split screens 1/r with erfc.
All Fourier factors follow the convention K_hat(k) = int K(r) e^{-ik.r} dr.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erfc

_SQRT_PI = np.sqrt(np.pi)


def _as_points(r):
    r = np.asarray(r, dtype=float)
    squeeze = r.ndim == 1
    return np.atleast_2d(r), squeeze


def stokeslet(r):
    """S_ij(r); shape (..., 3, 3)."""
    r, squeeze = _as_points(r)
    d = np.linalg.norm(r, axis=-1)
    _check_nonzero(d)
    out = np.eye(3) / d[:, None, None] + np.einsum("ni,nj->nij", r, r) / d[:, None, None] ** 3
    return out[0] if squeeze else out


def rotlet(r):
    """R_ij(r) = eps_ijk r_k / r^3; shape (..., 3, 3)."""
    r, squeeze = _as_points(r)
    d = np.linalg.norm(r, axis=-1)
    _check_nonzero(d)
    out = np.zeros((r.shape[0], 3, 3))
    rk = r / d[:, None] ** 3
    out[:, 0, 1] = rk[:, 2]
    out[:, 1, 0] = -rk[:, 2]
    out[:, 1, 2] = rk[:, 0]
    out[:, 2, 1] = -rk[:, 0]
    out[:, 2, 0] = rk[:, 1]
    out[:, 0, 2] = -rk[:, 1]
    return out[0] if squeeze else out


def stresslet(r):
    """T_ijl(r) = -6 r_i r_j r_l / |r|^5; shape (..., 3, 3, 3)."""
    r, squeeze = _as_points(r)
    d = np.linalg.norm(r, axis=-1)
    _check_nonzero(d)
    out = -6.0 * np.einsum("ni,nj,nl->nijl", r, r, r) / d[:, None, None, None] ** 5
    return out[0] if squeeze else out


def stresslet_real(r, xi: float):
    """Ewald real-space part T^R_ijl(r; xi); decays like a Gaussian."""
    r, squeeze = _as_points(r)
    d = np.linalg.norm(r, axis=-1)
    _check_nonzero(d)
    xr = xi * d
    e = np.exp(-xr * xr)
    c_rrr = -(2.0 / d**4) * (
        3.0 / d * erfc(xr)
        + (2.0 * xi / _SQRT_PI) * (3.0 + 2.0 * xr**2 - 4.0 * xr**4) * e
    )
    c_delta = (8.0 * xi**3 / _SQRT_PI) * (2.0 - xr**2) * e
    rrr = np.einsum("ni,nj,nl->nijl", r, r, r)
    eye = np.eye(3)
    sym = (
        np.einsum("ij,nl->nijl", eye, r)
        + np.einsum("jl,ni->nijl", eye, r)
        + np.einsum("li,nj->nijl", eye, r)
    )
    out = c_rrr[:, None, None, None] * rrr + c_delta[:, None, None, None] * sym
    return out[0] if squeeze else out


def stresslet_fourier_real(r, xi: float):
    """Smooth remainder T^F = T - T^R in real space.

    Near r = 0 the subtraction cancels; for xi|r| < 1e-4 the Taylor limit
    T^F = a(xi,r) (delta_ij r_l + delta_jl r_i + delta_li r_j) + b(xi) r_i r_j r_l
    with a = -(16 xi^3/sqrt(pi))(1 - (3/2) xi^2 r^2), b = -96 xi^5/(5 sqrt(pi))
    is used instead.  T^F(0) = 0 (the kernel is odd).
    """
    r, squeeze = _as_points(r)
    d = np.linalg.norm(r, axis=-1)
    out = np.empty((r.shape[0], 3, 3, 3))
    near = xi * d < 1e-4
    far = ~near
    if far.any():
        out[far] = stresslet(r[far]) - stresslet_real(r[far], xi)
    if near.any():
        rn = r[near]
        dn = d[near]
        a = -(16.0 * xi**3 / _SQRT_PI) * (1.0 - 1.5 * (xi * dn) ** 2)
        b = -96.0 * xi**5 / (5.0 * _SQRT_PI)
        eye = np.eye(3)
        sym = (
            np.einsum("ij,nl->nijl", eye, rn)
            + np.einsum("jl,ni->nijl", eye, rn)
            + np.einsum("li,nj->nijl", eye, rn)
        )
        rrr = np.einsum("ni,nj,nl->nijl", rn, rn, rn)
        out[near] = a[:, None, None, None] * sym + b * rrr
    return out[0] if squeeze else out


def stresslet_fourier_hat(k, xi: float):
    """Fourier factor of T^F: purely imaginary, odd in k; shape (..., 3, 3, 3).

    The k = 0 mode is conditionally convergent; the periodic machinery sets
    it to zero (zero-mean gauge) and this function returns zero there.
    """
    k, squeeze = _as_points(k)
    k2 = np.einsum("ni,ni->n", k, k)
    safe = np.where(k2 > 0, k2, 1.0)
    eye = np.eye(3)
    sym = (
        np.einsum("ij,nl->nijl", eye, k)
        + np.einsum("jl,ni->nijl", eye, k)
        + np.einsum("li,nj->nijl", eye, k)
    )
    kkk = np.einsum("ni,nj,nl->nijl", k, k, k)
    poly = 8.0 + 2.0 * k2 / xi**2 + (k2 / xi**2) ** 2
    amp = (np.pi / safe) * poly * np.exp(-k2 / (4.0 * xi**2))
    out = 1j * amp[:, None, None, None] * (sym - 2.0 * kkk / safe[:, None, None, None])
    out[k2 == 0] = 0.0
    return out[0] if squeeze else out


def stokeslet_real(r, xi: float):
    """Hasimoto real-space stokeslet S^R_ij(r; xi)."""
    r, squeeze = _as_points(r)
    d = np.linalg.norm(r, axis=-1)
    _check_nonzero(d)
    xr = xi * d
    e = np.exp(-xr * xr)
    c1 = 2.0 * (xi * e / _SQRT_PI + erfc(xr) / (2.0 * d))
    c2 = -4.0 * xi * e / _SQRT_PI
    rhat = r / d[:, None]
    out = c1[:, None, None] * (np.eye(3) + np.einsum("ni,nj->nij", rhat, rhat))
    out += c2[:, None, None] * np.eye(3)
    return out[0] if squeeze else out


def stokeslet_fourier_hat(k, xi: float):
    """Hasimoto Fourier factor of S^F (real, even in k)."""
    k, squeeze = _as_points(k)
    k2 = np.einsum("ni,ni->n", k, k)
    safe = np.where(k2 > 0, k2, 1.0)
    proj = k2[:, None, None] * np.eye(3) - np.einsum("ni,nj->nij", k, k)
    amp = 8.0 * np.pi * (1.0 + k2 / (4.0 * xi**2)) / safe**2 * np.exp(-k2 / (4.0 * xi**2))
    out = amp[:, None, None] * proj
    out[k2 == 0] = 0.0
    return out[0] if squeeze else out


def rotlet_real(r, xi: float):
    """Rotlet real-space part from the erfc screening of 1/r."""
    r, squeeze = _as_points(r)
    d = np.linalg.norm(r, axis=-1)
    _check_nonzero(d)
    xr = xi * d
    c = erfc(xr) / d**3 + (2.0 * xi / _SQRT_PI) * np.exp(-xr * xr) / d**2
    out = np.zeros((r.shape[0], 3, 3))
    rk = r * c[:, None]
    out[:, 0, 1] = rk[:, 2]
    out[:, 1, 0] = -rk[:, 2]
    out[:, 1, 2] = rk[:, 0]
    out[:, 2, 1] = -rk[:, 0]
    out[:, 2, 0] = rk[:, 1]
    out[:, 0, 2] = -rk[:, 1]
    return out[0] if squeeze else out


def rotlet_fourier_hat(k, xi: float):
    """Rotlet Fourier factor: R^F_ij(k) = -4 pi i eps_ijl k_l e^{-k^2/4xi^2}/k^2."""
    k, squeeze = _as_points(k)
    k2 = np.einsum("ni,ni->n", k, k)
    safe = np.where(k2 > 0, k2, 1.0)
    amp = -4.0j * np.pi * np.exp(-k2 / (4.0 * xi**2)) / safe
    out = np.zeros((k.shape[0], 3, 3), dtype=complex)
    kk = k * amp[:, None]
    out[:, 0, 1] = kk[:, 2]
    out[:, 1, 0] = -kk[:, 2]
    out[:, 1, 2] = kk[:, 0]
    out[:, 2, 1] = -kk[:, 0]
    out[:, 2, 0] = kk[:, 1]
    out[:, 0, 2] = -kk[:, 1]
    out[k2 == 0] = 0.0
    return out[0] if squeeze else out


_KINDS = {
    "stokeslet": (stokeslet, False),
    "rotlet": (rotlet, False),
    "stresslet": (stresslet, False),
    "stresslet_real": (stresslet_real, True),
    "stresslet_fourier_real": (stresslet_fourier_real, True),
    "stresslet_fourier_hat": (stresslet_fourier_hat, True),
    "stokeslet_real": (stokeslet_real, True),
    "stokeslet_fourier_hat": (stokeslet_fourier_hat, True),
    "rotlet_real": (rotlet_real, True),
    "rotlet_fourier_hat": (rotlet_fourier_hat, True),
}


def eval_kernel(kind: str, r, xi: float | None = None):
    """Evaluate a kernel by name at point(s) ``r`` (or wavevector(s) ``k``)."""
    try:
        fn, needs_xi = _KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown kernel kind {kind!r}") from None
    if needs_xi:
        if xi is None or xi <= 0:
            raise ValueError(f"kernel {kind!r} requires a positive split parameter xi")
        return fn(r, xi)
    return fn(r)


def _check_nonzero(d):
    if np.any(d == 0.0):
        raise ZeroDivisionError("kernel evaluated at zero separation")
