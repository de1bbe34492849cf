"""Configuration of the triply periodic spectral Ewald summation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class EwaldConfig:
    """Periodic cell, split parameter and discretization of the Fourier part.

    ``box`` is the primary cell (B1, B2, B3); ``xi`` the Ewald split
    parameter; ``rc`` the real-space cutoff; ``grid`` the uniform FFT grid
    dimensions; ``window_points`` the number of grid points P inside the
    support of the truncated Gaussian window (per dimension).  The window
    shape constant is A = 0.9^2 * pi * P / 2.
    """

    box: tuple
    xi: float
    rc: float
    grid: tuple
    window_points: int = 16

    def __post_init__(self):
        self.box = tuple(float(b) for b in self.box)
        self.grid = tuple(int(m) for m in self.grid)
        if self.xi <= 0:
            raise ValueError("Ewald split parameter xi must be positive")
        if self.rc <= 0 or self.rc > 0.5 * min(self.box) * (1 + 1e-12):
            raise ValueError(
                f"cutoff rc={self.rc} must lie in (0, min(B)/2={0.5 * min(self.box)}]"
            )
        if any(m % 2 for m in self.grid):
            raise ValueError("FFT grid dimensions must be even")
        if any(self.window_points > m for m in self.grid):
            raise ValueError("window support exceeds the grid")
        h = self.spacing
        if self.window_points * max(h) > min(self.box) * (1 + 1e-12):
            raise ValueError("window support P*h_g exceeds the cell")

    @property
    def spacing(self) -> tuple:
        return tuple(b / m for b, m in zip(self.box, self.grid))

    @property
    def window_shape(self) -> float:
        return 0.9**2 * np.pi * self.window_points / 2.0

    @property
    def volume(self) -> float:
        return float(np.prod(self.box))

    def validate_against(self, d_direct: float):
        """rc must reach the direct-quadrature region of every object."""
        if self.rc < d_direct * (1 - 1e-12):
            raise ValueError(
                f"real-space cutoff rc={self.rc} smaller than the direct-region "
                f"threshold {d_direct}; the Fourier part is computed with direct "
                "quadrature only"
            )

    @staticmethod
    def auto(box, tol: float, rc: float | None = None,
             window_points: int | None = None) -> "EwaldConfig":
        """Pick (xi, grid, P) for error level ``tol`` at cutoff ``rc``.

        Real-space and Fourier truncation errors scale like exp(-(xi*rc)^2)
        and exp(-(k_max/2xi)^2); both are set to ``tol`` with a safety margin,
        and the grid is the smallest even one resolving k_max.
        """
        box = tuple(float(b) for b in box)
        if rc is None:
            rc = 0.45 * min(box)
        target = np.sqrt(np.log(1.0 / tol)) * 1.15
        xi = target / rc
        k_max = 2.0 * xi * target
        grid = tuple(int(2 * np.ceil(b * k_max / (2.0 * np.pi))) for b in box)
        if window_points is None:
            # shape constant gives a truncation error ~ exp(-A)
            window_points = int(2 * np.ceil(np.log(1.0 / tol) / (0.81 * np.pi)))
            window_points = max(8, window_points)
        window_points = min(window_points, min(grid))
        return EwaldConfig(box, xi, rc, grid, window_points)

    def wavenumbers(self):
        """FFT-ordered angular wavenumbers per dimension."""
        return [
            2.0 * np.pi * np.fft.fftfreq(m, d=b / m)
            for m, b in zip(self.grid, self.box)
        ]
