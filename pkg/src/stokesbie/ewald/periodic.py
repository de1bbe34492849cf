"""Triply periodic layer potentials and completion flows.

The periodic double layer splits into the real-space part (screened kernel
plus the special-quadrature correction pair near surfaces) and the Fourier
part (spread / FFT / scale / inverse FFT / gather).  The Fourier grid state
depends only on the densities; it is cached and reused for any number of
targets, which is what makes streamline computation affordable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry.surfaces import Pipe, PlaneWall
from ..potentials import CompletionSourceSet
from ..scene import Instance
from .config import EwaldConfig
from .fourier import FourierGridState, fourier_pipeline, gather
from .gauge import gauge_velocity, slab_gauge_tensor, tube_gauge_tensor
from .realspace import realspace_completion, realspace_double_layer


def _confinement_axis(inst: Instance) -> int:
    """Global axis of a wall normal / pipe axis (must be axis-aligned)."""
    local = np.array([0.0, 0.0, 1.0]) if isinstance(inst.obj, PlaneWall) \
        else np.array([1.0, 0.0, 0.0])
    v = inst.pose.rotate(local[None, :])[0]
    axis = int(np.argmax(np.abs(v)))
    if abs(abs(v[axis]) - 1.0) > 1e-10:
        raise ValueError("confining walls/pipes must be axis-aligned")
    return axis


class PeriodicScene:
    """Instances in a periodic cell with a shared Ewald configuration.

    ``gauge`` fixes the summation order of the conditionally convergent
    stresslet sum: "auto" picks slab-wise for plane walls, axis-wise for a
    pipe, and the plain zero-mean convention for unconfined systems; "zero"
    forces zero-mean.
    """

    def __init__(self, instances, config: EwaldConfig, viscosity: float = 1.0,
                 completion: list | None = None, gauge: str = "auto"):
        self.instances = list(instances)
        self.config = config
        self.viscosity = viscosity
        self.completion = list(completion or [])
        for inst in self.instances:
            config.validate_against(inst.params.d_direct)
        self._stresslet_state: FourierGridState | None = None
        self._completion_states = None
        self.pipeline_runs = 0
        self._gauge_tensor = None
        if gauge == "auto":
            walls = [i for i in self.instances if isinstance(i.obj, PlaneWall)]
            pipes = [i for i in self.instances if isinstance(i.obj, Pipe)]
            if walls:
                self._gauge_tensor = slab_gauge_tensor(_confinement_axis(walls[0]))
            elif pipes:
                self._gauge_tensor = tube_gauge_tensor(
                    _confinement_axis(pipes[0]), config.box)
        elif gauge != "zero":
            raise ValueError(f"unknown gauge {gauge!r}")

    # -- density bookkeeping -------------------------------------------------
    def _density_fingerprint(self) -> int:
        return hash(tuple((id(inst), inst.density.version) for inst in self.instances))

    def stresslet_state(self) -> FourierGridState:
        fp = self._density_fingerprint()
        state = self._stresslet_state
        if state is None or state.fingerprint != fp:
            nodes = np.concatenate([i.grid.nodes for i in self.instances])
            q = np.concatenate([i.density.values for i in self.instances])
            nrm = np.concatenate([i.grid.normals for i in self.instances])
            w = np.concatenate([i.grid.weights for i in self.instances])
            state = fourier_pipeline(nodes, self.config, "stresslet",
                                     q=q, nrm=nrm, w=w, fingerprint=fp)
            self._stresslet_state = state
            self.pipeline_runs += 1
        return state

    def completion_states(self):
        """Fourier states of the stokeslet and rotlet completion sums."""
        key = tuple((id(c), tuple(c.force), tuple(c.torque), c.n_src)
                    for c in self.completion)
        if self._completion_states is not None and self._completion_states[0] == key:
            return self._completion_states[1]
        if not self.completion:
            self._completion_states = (key, ())
            return ()
        pts = np.concatenate([c.points for c in self.completion])
        fs, ts = [], []
        for c in self.completion:
            f, t = c.strengths()
            fs.append(f)
            ts.append(t)
        f = np.concatenate(fs)
        t = np.concatenate(ts)
        states = []
        if np.any(f):
            states.append(fourier_pipeline(pts, self.config, "stokeslet", strengths=f))
        if np.any(t):
            states.append(fourier_pipeline(pts, self.config, "rotlet", strengths=t))
        self._completion_states = (key, tuple(states))
        self.pipeline_runs += len(states)
        return tuple(states)

    # -- evaluation ------------------------------------------------------------
    def double_layer(self, targets, reuse: bool = True,
                     force_kappa: dict | None = None) -> np.ndarray:
        """Periodic double layer of all instances at targets."""
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        if not reuse:
            self._stresslet_state = None
        out = gather(self.stresslet_state(), targets)
        out += realspace_double_layer(targets, self.instances, self.config,
                                      force_kappa=force_kappa)
        if self._gauge_tensor is not None:
            out += gauge_velocity(self._gauge_tensor, self.instances,
                                  self.config.box)
        return out

    def completion_flow(self, targets) -> np.ndarray:
        """Periodic completion flow of all sources at targets."""
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        out = np.zeros((targets.shape[0], 3))
        if not self.completion:
            return out
        for state in self.completion_states():
            out += gather(state, targets)
        out += realspace_completion(targets, self.completion, self.config)
        return out

    def flow(self, targets, u_background=None) -> np.ndarray:
        """Total flow: background + double layer + completion."""
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        out = self.double_layer(targets) + self.completion_flow(targets)
        if u_background is not None:
            out += u_background(targets)
        return out
