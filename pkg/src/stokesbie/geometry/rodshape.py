"""Meridian shape functions for rod particles.

A rod of length L and radius R is a surface of revolution with meridian
(rho(theta), beta(theta)), theta in [0, pi].  The polar interval splits into
a top cap [0, pi/3], a middle cylinder [pi/3, 2pi/3] (affine beta) and a
bottom cap [2pi/3, pi] (reflection of the top).

The smooth rod blends the cap into the cylinder with a C-infinity bump
function so that the unit tangent and all curvatures are continuous across
the junctions; the cap is reparametrized proportionally to arclength so that
Gauss-Legendre nodes in theta are Gauss-Legendre in arclength.  The
hemispherical variant joins a half-sphere cap to the cylinder and is only
C^1: its curvature jumps at the junction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad


def bump(t):
    """C-infinity bump with support [-1, 1], even, positive inside."""
    scalar = np.isscalar(t) or np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    a = np.abs(t)
    inside = a < 1.0
    ti = a[inside]
    # evaluate on |t| (even function); the exponent is negative there
    e = np.exp(4.0 * ti / (ti * ti - 1.0))
    out[inside] = (ti * ti + 1.0) * e / ((ti * ti - 1.0) * (1.0 + e)) ** 2
    return float(out[0]) if scalar else out


def bump_primitive(t):
    """Primitive of :func:`bump` vanishing at 0; equals +-1/8 for |t| >= 1."""
    scalar = np.isscalar(t) or np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.full_like(t, 0.125)
    out[t <= -1.0] = -0.125
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = 0.125 * np.tanh(2.0 * ti / (1.0 - ti * ti))
    return float(out[0]) if scalar else out


def _cheb_nodes(n: int, a: float, b: float) -> np.ndarray:
    k = np.arange(n)
    x = np.cos(np.pi * k / (n - 1))  # Chebyshev-Lobatto on [-1, 1], decreasing
    return 0.5 * (a + b) + 0.5 * (b - a) * x[::-1]


class _BaryTable:
    """Barycentric interpolant through precomputed samples (Chebyshev nodes)."""

    def __init__(self, x: np.ndarray, y: np.ndarray):
        from ..quadrature import barycentric_weights

        self.x = x
        self.y = y
        self.w = barycentric_weights(x)

    def __call__(self, xq):
        scalar = np.isscalar(xq) or np.ndim(xq) == 0
        xq = np.atleast_1d(np.asarray(xq, dtype=float))
        diff = xq[:, None] - self.x[None, :]
        hit = np.abs(diff) < 1e-15
        diff[hit] = 1.0
        terms = self.w[None, :] / diff
        out = (terms @ self.y) / terms.sum(axis=1)
        rows, cols = np.nonzero(hit)
        out[rows] = self.y[cols]
        return float(out[0]) if scalar else out


@dataclass
class RodShape:
    """Smooth rod meridian; see module docstring.

    ``cap_length`` defaults to 1.5 R, which makes the cap shape similar to a
    half-sphere; any value in (0, L/2) is admissible.
    """

    length: float
    radius: float
    cap_length: float | None = None
    n_table: int = 220
    _data: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        L, R = self.length, self.radius
        if self.cap_length is None:
            self.cap_length = 1.5 * R
        if not (0.0 < self.cap_length < 0.5 * L):
            raise ValueError(
                f"invalid rod geometry: cap length {self.cap_length} "
                f"requires 0 < cap < L/2 = {0.5 * L}"
            )
        if L <= 0 or R <= 0:
            raise ValueError("rod length and radius must be positive")
        self.mid_length = L - 2.0 * self.cap_length
        if self.mid_length <= 0:
            raise ValueError("rod middle cylinder has nonpositive length")
        # primitive integral of the bump's primitive, fixes the cap height
        i0, _ = quad(bump_primitive, 0.0, 1.0, epsabs=1e-15, epsrel=1e-13)
        self.b = self.cap_length * bump_primitive(1.0) / i0
        self._i0 = i0
        self._build_tables()

    # -- auxiliary cap parametrization ghat(t), t in [0, 1] ----------------
    def _ghat(self, t):
        t = np.asarray(t, dtype=float)
        lam = self._lambda_table(t)
        g1 = 8.0 * self.radius * bump_primitive(t)
        g2 = 0.5 * self.mid_length - 8.0 * self.b * (lam - self._i0)
        return g1, g2

    def _speed(self, t):
        """|ghat'(t)|, available in closed form."""
        t = np.asarray(t, dtype=float)
        return 8.0 * np.sqrt(
            (self.radius * bump(t)) ** 2 + (self.b * bump_primitive(t)) ** 2
        )

    def _build_tables(self):
        tc = _cheb_nodes(self.n_table, 0.0, 1.0)
        lam = np.array(
            [quad(bump_primitive, 0.0, t, epsabs=1e-15, epsrel=1e-13)[0] for t in tc]
        )
        self._lambda_table = _BaryTable(tc, lam)
        arc = np.array(
            [quad(self._speed, 0.0, t, epsabs=1e-14, epsrel=1e-13)[0] for t in tc]
        )
        self._arc_table = _BaryTable(tc, arc)
        self.cap_arclength = arc[-1]
        # dense monotone samples of theta(t) for inverting the arclength map
        td = np.linspace(0.0, 1.0, 2049)
        self._theta_dense = (np.pi / 3.0) * self._arc_table(td) / self.cap_arclength
        self._t_dense = td

    def _t_of_theta(self, theta):
        """Invert theta = (pi/3) s(t)/s(1) on the top cap by Newton iteration."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        target = theta * (3.0 / np.pi) * self.cap_arclength
        t = np.interp(theta, self._theta_dense, self._t_dense)
        for _ in range(60):
            res = self._arc_table(t) - target
            dt = res / self._speed(t)
            t = np.clip(t - dt, 0.0, 1.0)
            if np.max(np.abs(dt)) < 1e-15:
                break
        return t

    # -- public meridian ----------------------------------------------------
    def __call__(self, theta):
        """Return (rho, beta) at polar parameter(s) ``theta`` in [0, pi]."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        rho = np.empty_like(theta)
        beta = np.empty_like(theta)
        lo, hi = np.pi / 3.0, 2.0 * np.pi / 3.0
        top = theta <= lo
        bot = theta >= hi
        mid = ~top & ~bot
        if top.any():
            t = self._t_of_theta(theta[top])
            rho[top], beta[top] = self._ghat(t)
        if mid.any():
            rho[mid] = self.radius
            beta[mid] = self.mid_length * (1.5 - 3.0 * theta[mid] / np.pi)
        if bot.any():
            r, b = self(np.pi - theta[bot])
            rho[bot], beta[bot] = r, -b
        return rho, beta

    def derivatives(self, theta):
        """Return (drho/dtheta, dbeta/dtheta)."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        dr = np.empty_like(theta)
        db = np.empty_like(theta)
        lo, hi = np.pi / 3.0, 2.0 * np.pi / 3.0
        top = theta <= lo
        bot = theta >= hi
        mid = ~top & ~bot
        if top.any():
            t = self._t_of_theta(theta[top])
            dtheta_dt = (np.pi / 3.0) * self._speed(t) / self.cap_arclength
            dr[top] = 8.0 * self.radius * bump(t) / dtheta_dt
            db[top] = -8.0 * self.b * bump_primitive(t) / dtheta_dt
        if mid.any():
            dr[mid] = 0.0
            db[mid] = -3.0 * self.mid_length / np.pi
        if bot.any():
            r, b = self.derivatives(np.pi - theta[bot])
            dr[bot], db[bot] = -r, b
        return dr, db

    def tables(self, n_samples: int):
        """Sampled meridian (theta, rho, beta) at ``n_samples`` points."""
        theta = np.linspace(0.0, np.pi, n_samples)
        rho, beta = self(theta)
        return theta, rho, beta


@dataclass
class HemisphericalRodShape:
    """Rod with half-spherical caps: C^1 only, curvature jumps at junctions."""

    length: float
    radius: float

    def __post_init__(self):
        if self.length <= 2.0 * self.radius:
            raise ValueError("hemispherical rod requires L > 2R")
        self.mid_length = self.length - 2.0 * self.radius
        self.cap_length = self.radius

    def __call__(self, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        rho = np.empty_like(theta)
        beta = np.empty_like(theta)
        lo, hi = np.pi / 3.0, 2.0 * np.pi / 3.0
        top = theta <= lo
        bot = theta >= hi
        mid = ~top & ~bot
        u = 1.5 * theta[top]  # cap arc angle, proportional to arclength
        rho[top] = self.radius * np.sin(u)
        beta[top] = 0.5 * self.mid_length + self.radius * np.cos(u)
        rho[mid] = self.radius
        beta[mid] = self.mid_length * (1.5 - 3.0 * theta[mid] / np.pi)
        if bot.any():
            r, b = self(np.pi - theta[bot])
            rho[bot], beta[bot] = r, -b
        return rho, beta

    def derivatives(self, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        dr = np.empty_like(theta)
        db = np.empty_like(theta)
        lo, hi = np.pi / 3.0, 2.0 * np.pi / 3.0
        top = theta <= lo
        bot = theta >= hi
        mid = ~top & ~bot
        u = 1.5 * theta[top]
        dr[top] = 1.5 * self.radius * np.cos(u)
        db[top] = -1.5 * self.radius * np.sin(u)
        dr[mid] = 0.0
        db[mid] = -3.0 * self.mid_length / np.pi
        if bot.any():
            r, b = self.derivatives(np.pi - theta[bot])
            dr[bot], db[bot] = -r, b
        return dr, db


def build_rod_shape(length: float, radius: float, n_samples: int | None = None,
                    cap_length: float | None = None):
    """Construct the smooth rod meridian; optionally return sampled tables.

    With ``n_samples`` given, returns ``(theta, rho, beta)`` arrays; otherwise
    returns the :class:`RodShape` callable.
    """
    if length <= 3.0 * radius and cap_length is None:
        raise ValueError(
            f"smooth rod requires L > 3R for the default cap, got L={length}, R={radius}"
        )
    shape = RodShape(length, radius, cap_length=cap_length)
    if n_samples is None:
        return shape
    return shape.tables(n_samples)
