"""FFT part of the spectral Ewald method.

Five steps: (1) spread point strengths to a uniform grid by convolution with
a truncated Gaussian window, (2) FFT, (3) scale by the kernel's Fourier
factor divided by the squared window transform, (4) inverse FFT, (5) gather
at targets by another window convolution (trapezoidal rule).  Steps 1-4
produce a reusable grid state: any number of targets can be gathered from it
until the density changes.

The k = 0 mode is set to zero (zero-mean gauge); the periodic sums are
conditionally convergent and this is the summation-order convention adopted
throughout.  Nyquist planes are zeroed for the odd (imaginary) kernels so
the scaled spectrum stays Hermitian.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft
from scipy.special import erf

from .._kernels import se_gather, se_spread
from .config import EwaldConfig

_SYM_PAIRS = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]


def window_transform(config: EwaldConfig, axis: int, k: np.ndarray) -> np.ndarray:
    """Exact Fourier transform of the truncated Gaussian window (one axis)."""
    h = config.spacing[axis]
    T = 0.5 * h * config.window_points
    alpha = config.window_shape / T**2
    sq = np.sqrt(alpha)
    val = erf(sq * T + 1j * k / (2.0 * sq))
    return np.sqrt(np.pi / alpha) * np.exp(-k * k / (4.0 * alpha)) * val.real


def _khalf_grids(config: EwaldConfig):
    k1, k2, k3 = config.wavenumbers()
    m3 = config.grid[2] // 2 + 1
    k3r = k3[:m3].copy()
    k3r[-1] = abs(k3r[-1]) if config.grid[2] % 2 else -k3[m3 - 1]
    # rfft stores the non-negative third-axis frequencies
    k3r = 2.0 * np.pi * np.fft.rfftfreq(config.grid[2], d=config.spacing[2])
    return k1, k2, k3r


def _symmetrize_strengths(q: np.ndarray, nrm: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Six independent components of w * (q n^T + n q^T)/... for the stresslet.

    The Fourier factor is symmetric in (j, l), so only Z_jl + Z_lj enters for
    j != l; diagonal components enter once.
    """
    Z = np.empty((q.shape[0], 6))
    qn = q * nrm
    Z[:, 0] = w * qn[:, 0]
    Z[:, 1] = w * qn[:, 1]
    Z[:, 2] = w * qn[:, 2]
    Z[:, 3] = w * (q[:, 0] * nrm[:, 1] + q[:, 1] * nrm[:, 0])
    Z[:, 4] = w * (q[:, 0] * nrm[:, 2] + q[:, 2] * nrm[:, 0])
    Z[:, 5] = w * (q[:, 1] * nrm[:, 2] + q[:, 2] * nrm[:, 1])
    return Z


@dataclass
class FourierGridState:
    """Real-space grids of the Fourier-part velocity after steps 1-4."""

    grids: np.ndarray  # (3, M1, M2, M3)
    config: EwaldConfig
    fingerprint: int
    pipeline_runs: int = 1
    gather_calls: int = 0
    grid_ops: int = 0  # rough op counter for cost accounting


def _scale_and_invert(H_hat, config: EwaldConfig, kernel: str, xi: float):
    k1, k2, k3 = _khalf_grids(config)
    K1 = k1[:, None, None]
    K2 = k2[None, :, None]
    K3 = k3[None, None, :]
    k2tot = K1**2 + K2**2 + K3**2
    safe = np.where(k2tot > 0, k2tot, 1.0)
    decay = np.exp(-k2tot / (4.0 * xi * xi))
    w2 = (
        window_transform(config, 0, k1)[:, None, None] ** 2
        * window_transform(config, 1, k2)[None, :, None] ** 2
        * window_transform(config, 2, k3)[None, None, :] ** 2
    )
    out_hat = np.zeros((3,) + k2tot.shape, dtype=complex)
    kvec = (K1, K2, K3)
    if kernel == "stresslet":
        amp = (np.pi / safe) * (8.0 + 2.0 * k2tot / xi**2 + (k2tot / xi**2) ** 2) * decay
        amp = 1j * amp / w2
        kk = [np.broadcast_to(k, k2tot.shape) for k in kvec]
        for i in range(3):
            acc = np.zeros(k2tot.shape, dtype=complex)
            for c, (j, l) in enumerate(_SYM_PAIRS):
                sym = (
                    (1.0 if i == j else 0.0) * kk[l]
                    + (1.0 if j == l else 0.0) * kk[i]
                    + (1.0 if l == i else 0.0) * kk[j]
                    - 2.0 * kk[i] * kk[j] * kk[l] / safe
                )
                acc += sym * H_hat[c]
            out_hat[i] = amp * acc
    elif kernel == "stokeslet":
        amp = 8.0 * np.pi * (1.0 + k2tot / (4.0 * xi * xi)) / safe**2 * decay / w2
        kf = H_hat[0] * kvec[0] + H_hat[1] * kvec[1] + H_hat[2] * kvec[2]
        for i in range(3):
            out_hat[i] = amp * (k2tot * H_hat[i] - kvec[i] * kf)
    elif kernel == "rotlet":
        amp = -4.0j * np.pi * decay / safe / w2
        # u_i = R_hat_ij tau_j = amp * eps_ijl k_l tau_j = amp * (tau x k)_i
        out_hat[0] = amp * (H_hat[1] * kvec[2] - H_hat[2] * kvec[1])
        out_hat[1] = amp * (H_hat[2] * kvec[0] - H_hat[0] * kvec[2])
        out_hat[2] = amp * (H_hat[0] * kvec[1] - H_hat[1] * kvec[0])
    else:
        raise ValueError(f"unknown Fourier kernel {kernel!r}")

    out_hat[:, 0, 0, 0] = 0.0
    if kernel in ("stresslet", "rotlet"):
        # odd kernels: unpaired Nyquist modes would break Hermitian symmetry
        m1, m2, m3 = config.grid
        out_hat[:, m1 // 2, :, :] = 0.0
        out_hat[:, :, m2 // 2, :] = 0.0
        out_hat[:, :, :, m3 // 2] = 0.0
    grids = np.stack(
        [scipy.fft.irfftn(out_hat[i], s=config.grid, workers=-1) for i in range(3)]
    )
    return grids


def fourier_pipeline(points: np.ndarray, config: EwaldConfig, kernel: str,
                     q: np.ndarray = None, nrm: np.ndarray = None,
                     w: np.ndarray = None, strengths: np.ndarray = None,
                     fingerprint: int = 0) -> FourierGridState:
    """Steps 1-4 for one kernel; returns the reusable grid state.

    For the stresslet pass nodal ``q``, ``nrm``, ``w``; for stokeslet/rotlet
    pass per-point ``strengths`` (N, 3).
    """
    points = np.ascontiguousarray(np.asarray(points, dtype=float))
    if kernel == "stresslet":
        Z = _symmetrize_strengths(np.asarray(q, float), np.asarray(nrm, float),
                                  np.asarray(w, float))
    else:
        Z = np.ascontiguousarray(np.asarray(strengths, dtype=float))
    H = se_spread(points, Z, np.array(config.box), np.array(config.grid, dtype=np.int64),
                  config.window_points, config.window_shape)
    H_hat = np.stack([scipy.fft.rfftn(H[c], workers=-1) for c in range(H.shape[0])])
    grids = _scale_and_invert(H_hat, config, kernel, config.xi)
    state = FourierGridState(grids=grids, config=config, fingerprint=fingerprint)
    state.grid_ops = points.shape[0] * config.window_points**3 * Z.shape[1]
    state.grid_ops += int(6 * np.prod(config.grid) * np.log2(max(np.prod(config.grid), 2)))
    return state


def gather(state: FourierGridState, targets: np.ndarray) -> np.ndarray:
    """Step 5: window convolution of the stored grids around each target."""
    targets = np.ascontiguousarray(np.atleast_2d(np.asarray(targets, dtype=float)))
    cfg = state.config
    out = se_gather(state.grids, targets, np.array(cfg.box),
                    cfg.window_points, cfg.window_shape)
    state.gather_calls += targets.shape[0]
    return out
