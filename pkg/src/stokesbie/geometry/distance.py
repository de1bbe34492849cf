"""Point-to-surface distance queries.

Particles reduce to a 1D minimization along the meridian (the surfaces are
axisymmetric); the minimizer is seeded from a dense sample and refined by
damped Newton iteration, with a golden-section fallback.  Walls have closed
forms.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize_scalar

from .surfaces import Pipe, PlaneWall


def _meridian_distance(body, rho_x: float, z_x: float) -> float:
    """Distance from the point (rho_x, z_x) in the meridian half-plane."""

    def f(theta):
        r, b = body.meridian(np.atleast_1d(theta))
        return (rho_x - r[0]) ** 2 + (z_x - b[0]) ** 2

    def fprime(theta):
        r, b = body.meridian(np.atleast_1d(theta))
        dr, db = body.meridian_derivatives(np.atleast_1d(theta))
        return 2.0 * ((r[0] - rho_x) * dr[0] + (b[0] - z_x) * db[0])

    n_seed = 16 * max(8, getattr(body, "n_theta", 64) if hasattr(body, "n_theta") else 64)
    thetas = np.linspace(0.0, np.pi, n_seed)
    r, b = body.meridian(thetas)
    vals = (rho_x - r) ** 2 + (z_x - b) ** 2
    k = int(np.argmin(vals))
    best = vals[k]
    theta = thetas[k]

    lo = thetas[max(k - 1, 0)]
    hi = thetas[min(k + 1, n_seed - 1)]
    if 0 < k < n_seed - 1:
        # damped Newton on f' with secant curvature estimate
        ok = False
        t = theta
        for _ in range(80):
            g = fprime(t)
            eps = 1e-7
            curv = (fprime(min(t + eps, np.pi)) - fprime(max(t - eps, 0.0))) / (2 * eps)
            if curv <= 0:
                break
            step = g / curv
            t_new = min(max(t - step, lo), hi)
            if abs(t_new - t) < 1e-14:
                t = t_new
                ok = True
                break
            t = t_new
        if ok and f(t) <= best + 1e-30:
            theta, best = t, f(t)
        else:
            res = minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-14})
            if res.fun < best:
                theta, best = res.x, res.fun
    # poles are boundary candidates
    best = min(best, f(0.0), f(np.pi))
    return float(np.sqrt(best))


def distance_to_surface(x, obj, pose=None) -> float:
    """Minimum distance from the point ``x`` (global frame) to the surface."""
    x = np.asarray(x, dtype=float)
    pose = pose if pose is not None else obj.pose
    x_loc = pose.to_local(x[None, :])[0]
    if isinstance(obj, (PlaneWall, Pipe)):
        return obj.distance_local(x_loc)
    rho_x = float(np.hypot(x_loc[0], x_loc[1]))
    return _meridian_distance(obj, rho_x, float(x_loc[2]))
