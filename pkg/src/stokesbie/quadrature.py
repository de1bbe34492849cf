"""One-dimensional rules, surface quadrature and precomputed upsampling.

Particle surfaces carry tensor-product grids: Gauss-Legendre in the polar
direction (per part, for rods) and the trapezoidal rule in the periodic
azimuthal direction, where it is spectrally accurate.  Wall patches carry
Gauss-Legendre tensor grids.  Upsampling interpolates nodal data onto a
grid refined by an integer factor kappa in both directions: trigonometric
(zero-padded DFT) resampling in the azimuth, barycentric Lagrange
interpolation in the polar/patch directions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import roots_legendre


@dataclass(frozen=True)
class Rule1D:
    """Nodes and weights of a quadrature rule on an interval."""

    nodes: np.ndarray
    weights: np.ndarray
    interval: tuple[float, float]

    def __len__(self) -> int:
        return self.nodes.size


def gauss_legendre(n: int, a: float = -1.0, b: float = 1.0) -> Rule1D:
    """Gauss-Legendre rule with ``n`` nodes mapped affinely to ``[a, b]``."""
    if n < 1:
        raise ValueError(f"Gauss-Legendre rule needs n >= 1, got {n}")
    x, w = roots_legendre(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return Rule1D(mid + half * x, half * w, (a, b))


def trapezoidal(n: int, period: float = 2.0 * np.pi) -> Rule1D:
    """Periodic trapezoidal rule with ``n`` equispaced nodes on ``[0, period)``."""
    if n < 1:
        raise ValueError(f"trapezoidal rule needs n >= 1, got {n}")
    h = period / n
    return Rule1D(h * np.arange(n), np.full(n, h), (0.0, period))


def direct_quadrature(grid, f: np.ndarray) -> np.ndarray:
    """Apply the direct rule of ``grid`` to node samples ``f``.

    ``f`` has shape ``(N,)`` or ``(N, k)`` with ``N = grid.n_nodes``; the
    weights already include the area element.
    """
    f = np.asarray(f)
    if f.shape[0] != grid.n_nodes:
        raise ValueError(
            f"integrand has {f.shape[0]} samples, grid has {grid.n_nodes} nodes"
        )
    return np.tensordot(grid.weights, f, axes=(0, 0))


def barycentric_weights(x: np.ndarray) -> np.ndarray:
    """Barycentric weights for interpolation nodes ``x`` (rescaled for stability)."""
    x = np.asarray(x, dtype=float)
    c = 4.0 / (x.max() - x.min())
    w = np.ones_like(x)
    for i in range(x.size):
        d = c * (x[i] - x)
        d[i] = 1.0
        w[i] = 1.0 / np.prod(d)
    return w / np.abs(w).max()


def barycentric_matrix(x_src: np.ndarray, x_dst: np.ndarray) -> np.ndarray:
    """Dense matrix evaluating the interpolant through ``x_src`` at ``x_dst``."""
    x_src = np.asarray(x_src, dtype=float)
    x_dst = np.asarray(x_dst, dtype=float)
    w = barycentric_weights(x_src)
    diff = x_dst[:, None] - x_src[None, :]
    scale = max(1.0, np.abs(x_src).max())
    exact = np.abs(diff) < 1e-14 * scale
    diff = np.where(exact, 1.0, diff)
    m = w[None, :] / diff
    m /= m.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    m[hit] = 0.0
    m[exact] = 1.0
    return m


def trig_resample_matrix(n: int, n_fine: int) -> np.ndarray:
    """Matrix resampling ``n`` equispaced periodic samples onto ``n_fine``.

    Built by zero-padding the discrete Fourier transform; exact for
    trigonometric polynomials resolved on the coarse grid.  For even ``n``
    the Nyquist coefficient is split into a pure cosine, the symmetric
    convention that keeps the interpolant real.
    """
    if n_fine < n:
        raise ValueError("trigonometric resampling only refines")
    if n_fine == n:
        return np.eye(n)
    spec = np.fft.rfft(np.eye(n), axis=0)
    if n % 2 == 0:
        spec[-1] *= 0.5
    pad = np.zeros((n_fine // 2 + 1 - spec.shape[0], n), dtype=complex)
    spec_f = np.concatenate([spec, pad], axis=0)
    return np.fft.irfft(spec_f, n=n_fine, axis=0) * (n_fine / n)


@dataclass
class UpsampleOperator:
    """Precomputed interpolation from a coarse grid onto a kappa-refined grid.

    For particles the whole surface is refined; for walls only the selected
    patch neighbourhood is refined while the other patches keep the coarse
    rule.  Interpolation factors are applied separably; ``matrix``
    materializes the dense fine-from-coarse map on demand.
    """

    source_key: str
    kappa: int
    fine_grid: "SurfaceGrid"  # noqa: F821  (constructed by geometry)
    _apply: Callable = field(repr=False, default=None)
    _materialize: Callable = field(repr=False, default=None)
    _contract: Callable = field(repr=False, default=None)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Interpolate nodal ``values`` with shape ``(N,)`` or ``(N, k)``."""
        return self._apply(np.asarray(values))

    def contract(self, fine_values: np.ndarray) -> np.ndarray:
        """Transpose application: fold fine-grid functionals back to coarse nodes."""
        return self._contract(np.asarray(fine_values))

    @property
    def matrix(self) -> np.ndarray:
        return self._materialize()
