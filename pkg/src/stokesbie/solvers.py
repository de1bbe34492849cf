"""Resistance and mobility solvers.

The boundary integral equation is collocated at the quadrature nodes
(Nystrom method).  Resistance: given rigid-body velocities, solve

    D[q](x_i) - 4 pi q(x_i) + sum_a V^(a)[F[q], tau[q]](x_i) = U_Gamma - u_bg

for the density q, then read off forces F[q] = int q dS and torques
tau[q] = int (y - y_c) x q dS.  Mobility: given forces and torques,

    D[q](x_i) - 4 pi q(x_i) - U_Gamma[q](x_i) = -u_bg - sum_a V^(a)[F, tau]

with U_RBM[q] = -(4 pi/|Gamma_p|) int q dS and Omega_RBM[q] built from the
area-weighted orthonormal rotation vectors omega_n.  Both systems are
second-kind and solved with restarted GMRES; a block-diagonal preconditioner
inverts a single-particle (or single-wall-patch) operator per block, rotated
to each instance's pose.  Onsurface double layers use the precomputed
two-sided QBX matrices; periodic problems assemble the Ewald split per
iteration with the Fourier grid state rebuilt once per density.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from ._kernels import completion_sum, double_layer_sum, double_layer_sum_minimage
from .combined import classify_distance
from .ewald.gauge import gauge_velocity
from .ewald.fourier import gather
from .ewald.periodic import PeriodicScene
from .potentials import CompletionSourceSet
from .scene import Instance, _direct_sum, instance_double_layer


@dataclass
class ParticleData:
    """Per-particle problem data and completion-source layout."""

    instance: Instance
    velocity: np.ndarray | None = None      # U_RBM (resistance input)
    angular: np.ndarray | None = None       # Omega_RBM (resistance input)
    force: np.ndarray | None = None         # F (mobility input)
    torque: np.ndarray | None = None        # tau (mobility input)
    segment: np.ndarray | None = None       # completion half-vector a
    n_src: int = 1

    def __post_init__(self):
        if self.segment is None:
            self.segment = default_completion_segment(self.instance)

    @property
    def centroid(self) -> np.ndarray:
        return np.asarray(self.instance.pose.translation, dtype=float)


def default_completion_segment(inst: Instance) -> np.ndarray:
    """Sources sit on the symmetry axis, clear of the surface."""
    obj = inst.obj
    axis = inst.pose.rotate(np.array([[0.0, 0.0, 1.0]]))[0]
    if hasattr(obj, "length"):  # rod
        half = max(0.5 * obj.length - obj.cap_length, 0.25 * obj.length)
        return half * axis
    half = max(obj.c - obj.a, 0.0)  # spheroid; degenerate segment is fine
    return half * axis


@dataclass
class ProblemSpec:
    mode: str  # "resistance" | "mobility"
    particles: list
    walls: list = field(default_factory=list)
    viscosity: float = 1.0
    u_background: object = None
    periodic: PeriodicScene | None = None

    def __post_init__(self):
        if self.mode not in ("resistance", "mobility"):
            raise ValueError(f"unknown problem mode {self.mode!r}")
        for p in self.particles:
            if self.mode == "resistance" and (p.velocity is None or p.angular is None):
                raise ValueError("resistance problem needs particle velocities")
            if self.mode == "mobility" and (p.force is None or p.torque is None):
                raise ValueError("mobility problem needs forces and torques")

    @property
    def instances(self) -> list:
        return [p.instance for p in self.particles] + list(self.walls)


@dataclass
class Solution:
    densities: list
    forces: list = None
    torques: list = None
    velocities: list = None
    angulars: list = None
    residuals: list = field(default_factory=list)
    iterations: int = 0
    apply_seconds: list = field(default_factory=list)


def rigid_body_functionals(q: np.ndarray, inst: Instance, centroid=None):
    """(F, tau) and (U_RBM, Omega_RBM) functionals of a nodal density."""
    g = inst.grid
    yc = np.asarray(centroid if centroid is not None
                    else inst.pose.translation, dtype=float)
    w = g.weights
    F = np.einsum("s,sj->j", w, q)
    rel = g.nodes - yc
    tau = np.einsum("s,sj->j", w, np.cross(rel, q))
    area = w.sum()
    U = -(4.0 * np.pi / area) * F
    omega, A = rotation_vectors(inst, yc)
    Omega = -4.0 * np.pi * sum(
        (omega[n] / A[n]) * np.dot(omega[n], tau) for n in range(3)
    )
    return (F, tau), (U, Omega)


def rotation_vectors(inst: Instance, centroid=None):
    """Unit vectors omega_n and weights A_n with the stipulated
    area-weighted orthonormality (an eigenbasis of the inertia-like form)."""
    g = inst.grid
    yc = np.asarray(centroid if centroid is not None
                    else inst.pose.translation, dtype=float)
    rel = g.nodes - yc
    r2 = np.einsum("sk,sk->s", rel, rel)
    G = np.eye(3) * np.einsum("s,s->", g.weights, r2)
    G -= np.einsum("s,si,sj->ij", g.weights, rel, rel)
    A, V = np.linalg.eigh(G)
    return [V[:, n] for n in range(3)], A


def completion_sets(spec: ProblemSpec, forces, torques) -> list:
    out = []
    for p, F, tau in zip(spec.particles, forces, torques):
        out.append(CompletionSourceSet(
            p.instance.name, F, tau, p.centroid, p.segment,
            n_src=p.n_src, viscosity=spec.viscosity))
    return out


def _completion_velocity(sets, targets) -> np.ndarray:
    targets = np.ascontiguousarray(np.atleast_2d(targets))
    out = np.zeros((targets.shape[0], 3))
    for cs in sets:
        f, t = cs.strengths()
        out += completion_sum(targets, np.ascontiguousarray(cs.points),
                              np.ascontiguousarray(f), np.ascontiguousarray(t),
                              0, 0.0)
    return out


class OnsurfaceOperator:
    """Matrix-free Nystrom operator of a problem specification."""

    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        self.instances = spec.instances
        self.sizes = [3 * inst.grid.n_nodes for inst in self.instances]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        self.n = int(self.offsets[-1])
        self._i_version = 0
        self._cross_cache = {}

    # -- density plumbing -----------------------------------------------------
    def split(self, x: np.ndarray) -> list:
        return [x[o:o + s].reshape(-1, 3)
                for o, s in zip(self.offsets[:-1], self.sizes)]

    def assign(self, x: np.ndarray):
        for inst, q in zip(self.instances, self.split(x)):
            inst.set_density(q)

    # -- the double layer at all nodes ---------------------------------------
    def double_layer_all(self) -> np.ndarray:
        spec = self.spec
        out = np.zeros((self.n // 3, 3))
        row = 0
        if spec.periodic is not None:
            state = spec.periodic.stresslet_state()
            all_nodes = np.concatenate([i.grid.nodes for i in self.instances])
            out += gather(state, all_nodes)
            if spec.periodic._gauge_tensor is not None:
                out += gauge_velocity(spec.periodic._gauge_tensor,
                                      self.instances, spec.periodic.config.box)
        for inst in self.instances:
            n_i = inst.grid.n_nodes
            rows = slice(row, row + n_i)
            out[rows] += self._self_term(inst)
            for other in self.instances:
                if other is inst:
                    continue
                out[rows] += self._cross_term(inst, other)
            if spec.periodic is not None:
                out[rows] += self._periodic_extras(inst)
            row += n_i
        return out

    def _self_term(self, inst: Instance) -> np.ndarray:
        """Own-surface double layer: QBX matrices, plus the periodic
        correction pair and (for walls) the beyond-neighbourhood patches."""
        spec = self.spec
        q_loc = inst.density_local.values
        q = inst.density.values
        g = inst.grid
        if not inst.is_wall:
            vals = inst.pose.rotate(inst.qbx.onsurface_apply(q_loc))
            if spec.periodic is not None:
                vals -= _direct_sum(g.nodes, g.nodes, q, g.normals, g.weights,
                                    kind=2, xi=spec.periodic.config.xi)
            return vals
        vals = inst.pose.rotate(inst.qbx.onsurface_apply(q_loc))
        per_patch = inst.qbx.per_patch
        P1, P2 = inst.obj.patches
        xi = spec.periodic.config.xi if spec.periodic is not None else 0.0
        box = spec.periodic.config.box if spec.periodic is not None else None
        for p1 in range(P1):
            for p2 in range(P2):
                blk = p1 * P2 + p2
                rows = slice(blk * per_patch, (blk + 1) * per_patch)
                covered = inst.patch_node_mask(
                    [((p1 + di) % P1, (p2 + dj) % P2)
                     for di in (-1, 0, 1) for dj in (-1, 0, 1)])
                rest = ~covered
                if spec.periodic is None:
                    if rest.any():
                        vals[rows] += _direct_sum(
                            g.nodes[rows], g.nodes[rest], q[rest],
                            g.normals[rest], g.weights[rest])
                    continue
                if rest.any():
                    vals[rows] += double_layer_sum_minimage(
                        np.ascontiguousarray(g.nodes[rows]),
                        np.ascontiguousarray(g.nodes[rest]),
                        np.ascontiguousarray(q[rest]),
                        np.ascontiguousarray(g.normals[rest]),
                        np.ascontiguousarray(g.weights[rest]),
                        1, xi, np.asarray(box, dtype=float))
                # subtract T^F over the contiguous neighbourhood (canonical)
                rho = inst.qbx.gather_neighbourhood(p1, p2, q_loc)
                Q, _ = inst.qbx.patch_transform(p1, p2)
                cg = inst.qbx.canon_grid
                idxs, xs, _ = inst.qbx.canonical_sites()
                corr = double_layer_sum(
                    np.ascontiguousarray(xs), np.ascontiguousarray(cg.local_nodes),
                    np.ascontiguousarray(rho), np.ascontiguousarray(cg.local_normals),
                    np.ascontiguousarray(cg.weights), 2, xi)
                vals[rows] -= inst.pose.rotate(corr @ Q.T)
        return vals

    def _cross_term(self, target_inst: Instance, src: Instance) -> np.ndarray:
        """Contribution of another object at this instance's nodes."""
        spec = self.spec
        targets = target_inst.grid.nodes
        if spec.periodic is None:
            key = (id(target_inst), id(src))
            dists = self._cross_cache.get(key)
            if dists is None:
                dists = src.surface_distances(targets)
                self._cross_cache[key] = dists
            return instance_double_layer(src, targets, distances=dists)
        from .ewald.realspace import realspace_double_layer

        return realspace_double_layer(targets, [src], spec.periodic.config)

    def _periodic_extras(self, inst: Instance) -> np.ndarray:
        """Periodic self-images beyond the primary copy (particles only)."""
        spec = self.spec
        if inst.is_wall:
            return 0.0  # minimum-image handling already covers wall images
        from .ewald.realspace import image_shifts

        cfg = spec.periodic.config
        targets = inst.grid.nodes
        q = inst.density.values
        g = inst.grid
        out = np.zeros_like(targets)
        centre = g.nodes.mean(axis=0)
        reach = inst.obj.bounding_radius * 2.1 + cfg.rc
        for shift in image_shifts(cfg.box):
            if not np.any(shift):
                continue
            if np.linalg.norm(shift) > reach:
                continue
            rel = targets - shift
            out += _direct_sum(rel, g.nodes, q, g.normals, g.weights,
                               kind=1, xi=cfg.xi)
        return out

    # -- full operator ---------------------------------------------------------
    def matvec(self, x: np.ndarray) -> np.ndarray:
        t0 = time.perf_counter()
        spec = self.spec
        self.assign(x)
        out = self.double_layer_all()
        out -= 4.0 * np.pi * np.concatenate(
            [inst.density.values for inst in self.instances])
        all_nodes = np.concatenate([i.grid.nodes for i in self.instances])
        if spec.mode == "resistance":
            forces, torques = [], []
            for p in spec.particles:
                (F, tau), _ = rigid_body_functionals(
                    p.instance.density.values, p.instance, p.centroid)
                forces.append(F)
                torques.append(tau)
            sets = completion_sets(spec, forces, torques)
            if spec.periodic is None:
                out += _completion_velocity(sets, all_nodes)
            else:
                out += _periodic_completion(spec, sets, all_nodes)
        else:
            row = 0
            for p in spec.particles:
                n_i = p.instance.grid.n_nodes
                _, (U, Om) = rigid_body_functionals(
                    p.instance.density.values, p.instance, p.centroid)
                rel = p.instance.grid.nodes - p.centroid
                out[row:row + n_i] -= U + np.cross(
                    np.broadcast_to(Om, rel.shape), rel)
                row += n_i
        self._last_apply = time.perf_counter() - t0
        return out.reshape(-1)

    def rhs(self) -> np.ndarray:
        spec = self.spec
        all_nodes = np.concatenate([i.grid.nodes for i in self.instances])
        out = np.zeros_like(all_nodes)
        if spec.u_background is not None:
            out -= spec.u_background(all_nodes)
        if spec.mode == "resistance":
            row = 0
            for inst in self.instances:
                n_i = inst.grid.n_nodes
                match = [p for p in spec.particles if p.instance is inst]
                if match:
                    p = match[0]
                    rel = inst.grid.nodes - p.centroid
                    out[row:row + n_i] += np.asarray(p.velocity) + np.cross(
                        np.broadcast_to(np.asarray(p.angular), rel.shape), rel)
                row += n_i
        else:
            sets = completion_sets(
                spec,
                [np.asarray(p.force, dtype=float) for p in spec.particles],
                [np.asarray(p.torque, dtype=float) for p in spec.particles])
            if spec.periodic is None:
                out -= _completion_velocity(sets, all_nodes)
            else:
                out -= _periodic_completion(spec, sets, all_nodes)
        return out.reshape(-1)


def _periodic_completion(spec: ProblemSpec, sets, targets) -> np.ndarray:
    from .ewald.fourier import fourier_pipeline
    from .ewald.realspace import realspace_completion

    cfg = spec.periodic.config
    out = realspace_completion(targets, sets, cfg)
    pts = np.concatenate([cs.points for cs in sets])
    f = np.concatenate([cs.strengths()[0] for cs in sets])
    t = np.concatenate([cs.strengths()[1] for cs in sets])
    if np.any(f):
        out += gather(fourier_pipeline(pts, cfg, "stokeslet", strengths=f), targets)
    if np.any(t):
        out += gather(fourier_pipeline(pts, cfg, "rotlet", strengths=t), targets)
    return out


# ---------------------------------------------------------------------------
# block-diagonal preconditioner
# ---------------------------------------------------------------------------

class BlockPreconditioner:
    """Explicit inverses of single-particle / single-wall-patch operators,
    rotated to each instance's pose."""

    def __init__(self, op: OnsurfaceOperator, max_block: int = 4200):
        self.op = op
        spec = op.spec
        self.blocks = []  # (offset, apply)
        shape_cache = {}
        for inst, p_data, off in self._iter_blocks():
            key = (inst.obj.shape_key(), spec.mode,
                   None if p_data is None else (p_data.n_src,
                                                tuple(p_data.segment)))
            if inst.is_wall:
                lu = shape_cache.get(key)
                if lu is None:
                    lu = self._wall_patch_lu(inst)
                    shape_cache[key] = lu
                self._add_wall_blocks(inst, off, lu)
            else:
                n3 = 3 * inst.grid.n_nodes
                if n3 > max_block:
                    self.blocks.append((off, n3, None, None))
                    continue
                lu = shape_cache.get(key)
                if lu is None:
                    lu = self._particle_lu(inst, p_data)
                    shape_cache[key] = lu
                R = inst.pose.matrix
                self.blocks.append((off, n3, lu, R))

    def _iter_blocks(self):
        spec = self.op.spec
        for inst, off in zip(self.op.instances, self.op.offsets[:-1]):
            match = [p for p in spec.particles if p.instance is inst]
            yield inst, (match[0] if match else None), int(off)

    def _particle_lu(self, inst: Instance, p_data):
        """Dense local-frame single-particle operator, factorized."""
        spec = self.op.spec
        n = inst.grid.n_nodes
        g_loc = inst.obj.discretize()  # identity pose
        A = self._assemble_self_matrix(inst)
        A -= 4.0 * np.pi * np.eye(3 * n)
        w = g_loc.weights
        nodes = g_loc.local_nodes
        if spec.mode == "resistance":
            # completion term: rank-6 map q -> V[F[q], tau[q]] at nodes,
            # with F_c[q] = sum w q_c and tau_c[q] = sum w (y x q)_c
            seg = inst.pose.rotate_back(p_data.segment[None, :])[0]
            basis = np.eye(3)
            for comp in range(6):
                F = basis[comp] if comp < 3 else np.zeros(3)
                tau = basis[comp - 3] if comp >= 3 else np.zeros(3)
                cs = CompletionSourceSet("pc", F, tau, np.zeros(3), seg,
                                         p_data.n_src, spec.viscosity)
                col = _completion_velocity([cs], nodes).reshape(-1)
                if comp < 3:
                    func = (w[:, None] * np.tile(basis[comp], (n, 1))).reshape(-1)
                else:
                    func = (w[:, None] * np.cross(basis[comp - 3], nodes)).reshape(-1)
                A += np.outer(col, func)
        else:
            area = w.sum()
            omega, Avals = rotation_vectors(inst, np.zeros(3))
            omega = [inst.pose.rotate_back(o[None, :])[0] for o in omega]
            for comp in range(3):
                e = np.eye(3)[comp]
                col_u = np.tile(e, (n, 1)).reshape(-1)
                func_u = (w[:, None] * np.tile(e, (n, 1))).reshape(-1)
                A += (4.0 * np.pi / area) * np.outer(col_u, func_u)
            for nvec, Aval in zip(omega, Avals):
                col = np.cross(np.broadcast_to(nvec, nodes.shape), nodes).reshape(-1)
                func = (w[:, None] * np.cross(nvec, nodes)).reshape(-1)
                A += (4.0 * np.pi / Aval) * np.outer(col, func)
        return scipy.linalg.lu_factor(A)

    def _assemble_self_matrix(self, inst: Instance) -> np.ndarray:
        """Dense local onsurface double layer from the canonical R stack."""
        ops = inst.qbx
        n_t, n_phi = ops.n_theta, ops.n_phi
        N = inst.grid.n_nodes
        r_stack = ops.r_stack  # (n_can, 3, N, 3)
        A = np.empty((n_t, n_phi, 3, N, 3))
        from .qbx.precompute import _REFLECT_Z, _rotz

        n_can = len(ops.canonical)
        for j in range(n_phi):
            rot = _rotz(ops.grid.phi[j] - ops.grid.phi[0])
            for refl in (False, True):
                Q = rot @ _REFLECT_Z if refl else rot
                # D(x_actual) = Q R_a rho with rho_(k,d) = (Q^T q(pi(k)))_d
                blk = np.einsum("ib,abkd,ed->aike", Q, r_stack, Q)
                blk = blk.reshape(n_can, 3, n_t, n_phi, 3)
                if refl:
                    blk = blk[:, :, ::-1]
                blk = np.roll(blk, j, axis=3)
                rows = (n_t - 1 - ops.canonical) if refl else ops.canonical
                A[rows, j] = blk.reshape(n_can, 3, N, 3)
        return A.reshape(3 * N, 3 * N)

    def _wall_patch_lu(self, inst: Instance):
        ops = inst.qbx
        per = ops.per_patch
        r_stack = ops.r_stack  # (per, 3, 9*per, 3)
        centre = ops.offsets.index((0, 0))
        block = r_stack[:, :, centre * per:(centre + 1) * per, :]
        A = block.transpose(0, 1, 2, 3).reshape(3 * per, 3 * per)
        A = A - 4.0 * np.pi * np.eye(3 * per)
        return scipy.linalg.lu_factor(A)

    def _add_wall_blocks(self, inst: Instance, off: int, lu):
        per = inst.qbx.per_patch
        P1, P2 = inst.obj.patches
        for p1 in range(P1):
            for p2 in range(P2):
                blk = p1 * P2 + p2
                Q, _ = inst.qbx.patch_transform(p1, p2)
                R = inst.pose.matrix @ Q
                self.blocks.append((off + 3 * per * blk, 3 * per, lu, R))

    def apply(self, x: np.ndarray) -> np.ndarray:
        out = x.copy()
        for off, n3, lu, R in self.blocks:
            if lu is None:
                out[off:off + n3] = x[off:off + n3] / (-4.0 * np.pi)
                continue
            seg = x[off:off + n3].reshape(-1, 3)
            loc = seg @ R  # rotate into the block's local frame
            sol = scipy.linalg.lu_solve(lu, loc.reshape(-1))
            out[off:off + n3] = (sol.reshape(-1, 3) @ R.T).reshape(-1)
        return out


def solve(spec: ProblemSpec, rtol: float = 1e-6, restart: int = 100,
          maxiter: int = 200, preconditioner: str = "auto") -> Solution:
    """GMRES solve of the collocated boundary integral equation."""
    op = OnsurfaceOperator(spec)
    b = op.rhs()
    A = spla.LinearOperator((op.n, op.n), matvec=op.matvec)
    M = None
    if preconditioner in ("auto", "block"):
        pre = BlockPreconditioner(op)
        if preconditioner == "block" or any(
                lu is not None for *_, lu, _R in pre.blocks):
            M = spla.LinearOperator((op.n, op.n), matvec=pre.apply)
    residuals = []
    applies = []

    def cb(pr_norm):
        residuals.append(float(pr_norm))
        applies.append(getattr(op, "_last_apply", 0.0))

    x, info = spla.gmres(A, b, rtol=rtol, atol=0.0, restart=restart,
                         maxiter=maxiter, M=M, callback=cb,
                         callback_type="pr_norm")
    if info != 0:
        raise RuntimeError(
            f"GMRES did not converge in {maxiter} iterations "
            f"(last residual {residuals[-1] if residuals else float('nan')}); "
            f"residual history attached")
    qs = op.split(x)
    op.assign(x)
    sol = Solution(densities=qs, residuals=residuals, iterations=len(residuals),
                   apply_seconds=applies)
    sol.forces, sol.torques, sol.velocities, sol.angulars = [], [], [], []
    for p in spec.particles:
        (F, tau), (U, Om) = rigid_body_functionals(
            p.instance.density.values, p.instance, p.centroid)
        if spec.mode == "resistance":
            sol.forces.append(F)
            sol.torques.append(tau)
            sol.velocities.append(np.asarray(p.velocity, dtype=float))
            sol.angulars.append(np.asarray(p.angular, dtype=float))
        else:
            sol.forces.append(np.asarray(p.force, dtype=float))
            sol.torques.append(np.asarray(p.torque, dtype=float))
            sol.velocities.append(U)
            sol.angulars.append(Om)
    return sol
