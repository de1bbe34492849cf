"""Free-space layer potentials and completion flows.

The double layer D_i[Gamma, q](x) = int T_ijl(x - y) q_j n_l dS is evaluated
with the direct quadrature rule; near-surface and onsurface evaluation are
the combined module's job.  Completion flows are stokeslet/rotlet point
flows averaged over N_src sources on a line segment inside each particle;
they remove the double layer's nullspace so particles can carry net force
and torque.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import completion_sum, double_layer_sum


@dataclass
class DensityField:
    """Vector-valued double layer density sampled at a grid's nodes."""

    surface_id: str
    values: np.ndarray  # (N, 3)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != 3:
            raise ValueError("density values must have shape (N, 3)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("density values must be finite")


def source_offsets(n_src: int) -> np.ndarray:
    """Relative positions C(s, N_src) of completion sources on [-1, 1]."""
    if n_src < 1:
        raise ValueError("need at least one completion source")
    if n_src == 1:
        return np.zeros(1)
    return -1.0 + 2.0 * np.arange(n_src) / (n_src - 1)


@dataclass
class CompletionSourceSet:
    """Point force/torque sources along a segment inside one particle."""

    particle_id: str
    force: np.ndarray
    torque: np.ndarray
    centroid: np.ndarray
    segment: np.ndarray  # half-vector a: sources at centroid + C(s) * a
    n_src: int = 1
    viscosity: float = 1.0

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float)
        self.torque = np.asarray(self.torque, dtype=float)
        self.centroid = np.asarray(self.centroid, dtype=float)
        self.segment = np.asarray(self.segment, dtype=float)

    @property
    def points(self) -> np.ndarray:
        return self.centroid[None, :] + source_offsets(self.n_src)[:, None] * self.segment

    def strengths(self):
        """Per-source (force, torque) including the 1/(8 pi mu N_src) factor."""
        scale = 1.0 / (8.0 * np.pi * self.viscosity * self.n_src)
        f = np.tile(scale * self.force, (self.n_src, 1))
        t = np.tile(scale * self.torque, (self.n_src, 1))
        return f, t


def double_layer_direct(grid, q, targets) -> np.ndarray:
    """Direct-quadrature double layer at targets off the grid nodes."""
    targets = np.ascontiguousarray(np.atleast_2d(np.asarray(targets, dtype=float)))
    qv = q.values if isinstance(q, DensityField) else np.asarray(q, dtype=float)
    if qv.shape[0] != grid.n_nodes:
        raise ValueError("density and grid sizes differ")
    d2 = ((targets[:, None, :] - grid.nodes[None, :, :]) ** 2).sum(-1)
    if np.any(d2 == 0.0):
        raise ZeroDivisionError("target coincides with a quadrature node")
    return double_layer_sum(
        targets,
        np.ascontiguousarray(grid.nodes),
        np.ascontiguousarray(qv),
        np.ascontiguousarray(grid.normals),
        np.ascontiguousarray(grid.weights),
        0,
        0.0,
    )


def completion_flow(sources: CompletionSourceSet, targets) -> np.ndarray:
    """Completion velocity (1/N_src) sum_s (S F + R tau)/(8 pi mu) at targets."""
    targets = np.ascontiguousarray(np.atleast_2d(np.asarray(targets, dtype=float)))
    pts = np.ascontiguousarray(sources.points)
    d2 = ((targets[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    if np.any(d2 == 0.0):
        raise ZeroDivisionError("target coincides with a completion source")
    f, t = sources.strengths()
    return completion_sum(targets, pts, np.ascontiguousarray(f),
                          np.ascontiguousarray(t), 0, 0.0)


def jump_limits(shape_ops, q, node_index: int):
    """One-sided limits and onsurface value of the double layer at a node.

    Returns (D_plus, D_minus, D_onsurface): the limit from the fluid side,
    the limit from the interior side, and their average, related by
    D_+- = D_onsurface -+ 4 pi q(x_i).
    """
    d_on = shape_ops.onsurface_values(q)[node_index]
    qv = q.values if isinstance(q, DensityField) else np.asarray(q, dtype=float)
    jump = 4.0 * np.pi * qv[node_index]
    return d_on - jump, d_on + jump, d_on
