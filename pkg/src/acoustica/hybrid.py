"""Hybrid FE/FD machinery shared by the forward and adjoint solvers.

The triangulated region advances with lumped-mass P1 elements, the outer
frame with the classic 5-point scheme; both are explicit central-difference
(leapfrog) updates. The two discretizations overlap on two rings of common
nodes and exchange values there once per step, after both updates:

  * the FE boundary ring (on the fem rectangle) is copied from the FD grid,
  * the FD ring one cell further in is copied from the FE solution.

All operators are assembled from one P1 pass over the triangles plus virtual
split-square triangles for frame cells, so the combined update is symmetric
and the scheme-compatible discrete energy is exactly non-increasing once the
source is off (the absorbing term uses the time-centred velocity, which makes
every boundary contribution dissipative).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DivergenceError, ShapeError
from .geometry import cell_splits_up_right
from .grid import FDGrid
from .mesh import CoefficientField, TriMesh


def p1_local_stiffness(p: np.ndarray) -> np.ndarray:
    """3x3 stiffness of a linear triangle with vertex rows p (CCW)."""
    b = np.array([p[1, 1] - p[2, 1], p[2, 1] - p[0, 1], p[0, 1] - p[1, 1]])
    c = np.array([p[2, 0] - p[1, 0], p[0, 0] - p[2, 0], p[1, 0] - p[0, 0]])
    area2 = b[0] * c[1] - b[1] * c[0]  # = 2*area for CCW vertices
    return (np.outer(b, b) + np.outer(c, c)) / (2.0 * area2)


def p1_assemble(vertices: np.ndarray, triangles: np.ndarray, n_nodes: int,
                coeff: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    """Assemble P1 stiffness and coefficient-weighted lumped mass.

    `triangles` may index any node numbering of size n_nodes; `vertices`
    must provide coordinates for every referenced node.
    """
    p = vertices[triangles]  # (m, 3, 2)
    x, y = p[..., 0], p[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area2 = b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0]
    if np.any(area2 <= 0):
        raise ShapeError("triangle orientation must be counter-clockwise")
    kloc = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (
        2.0 * area2[:, None, None]
    )
    rows = np.repeat(triangles, 3, axis=1).ravel()
    cols = np.tile(triangles, (1, 3)).ravel()
    K = sp.coo_matrix((kloc.ravel(), (rows, cols)), shape=(n_nodes, n_nodes)).tocsr()

    lumped = np.zeros(n_nodes)
    per_vertex = (coeff * area2 / 6.0)[:, None] * np.ones(3)
    np.add.at(lumped, triangles.ravel(), per_vertex.ravel())
    return K, lumped


@dataclass
class HybridSystem:
    """Discrete operators for one (mesh, grid, coefficient) triple."""

    mesh: TriMesh
    grid: FDGrid
    coefficient: CoefficientField

    # union numbering: FE vertices first, then FD-exclusive nodes
    n_fe: int = 0
    n_fd: int = 0
    n_union: int = 0
    union_coords: np.ndarray = None
    fd_to_union: np.ndarray = None

    K_fe: sp.csr_matrix = None
    mass_fe: np.ndarray = None
    fe_free: np.ndarray = None

    K_fd: sp.csr_matrix = None
    mass_fd: np.ndarray = None
    b_fd: np.ndarray = None
    top_fd: np.ndarray = None     # compact ids of the outer top row, by x1
    bottom_fd: np.ndarray = None  # compact ids of the outer bottom row, by x1

    outer_fd: np.ndarray = None   # exchange: FD ring on the fem boundary
    outer_fe: np.ndarray = None
    inner_fd: np.ndarray = None   # exchange: FD ring one cell inside
    inner_fe: np.ndarray = None

    K_union: sp.csr_matrix = None
    mass_union: np.ndarray = None
    b_union: np.ndarray = None

    obs_union: np.ndarray = None
    obs_coords: np.ndarray = None
    obs_weights: np.ndarray = None
    n_obs_top: int = 0

    @classmethod
    def build(cls, mesh: TriMesh, grid: FDGrid, coefficient: CoefficientField) -> "HybridSystem":
        coefficient.validate()
        sys = cls(mesh=mesh, grid=grid, coefficient=coefficient)

        n_fe = len(mesh.vertices)
        fe_coord_id = {(v[0], v[1]): i for i, v in enumerate(mesh.vertices)}

        # FD active nodes: shared ring nodes adopt the FE vertex id.
        fd_coords = grid.node_coords(grid.flat_of_compact)
        fd_union = np.empty(grid.n_active, dtype=np.int64)
        exclusive = []
        next_id = n_fe
        for k, xy in enumerate(map(tuple, fd_coords)):
            i = fe_coord_id.get(xy)
            if i is None:
                fd_union[k] = next_id
                exclusive.append(k)
                next_id += 1
            else:
                fd_union[k] = i
        n_union = next_id
        union_coords = np.empty((n_union, 2))
        union_coords[:n_fe] = mesh.vertices
        union_coords[fd_union[exclusive]] = fd_coords[exclusive]

        sys.n_fe, sys.n_fd, sys.n_union = n_fe, grid.n_active, n_union
        sys.union_coords = union_coords
        sys.fd_to_union = fd_union

        # FE operators.
        sys.K_fe, sys.mass_fe = p1_assemble(
            mesh.vertices, mesh.triangles, n_fe, coefficient.values
        )
        interface = mesh.interface_vertices
        free = np.ones(n_fe, dtype=bool)
        free[interface] = False
        sys.fe_free = np.flatnonzero(free)

        # Union operators: mesh triangles plus virtual frame triangles.
        frame_tris = _frame_triangles(grid, fd_union)
        all_tris = np.vstack([mesh.triangles, frame_tris])
        all_coeff = np.concatenate([coefficient.values, np.ones(len(frame_tris))])
        sys.K_union, sys.mass_union = p1_assemble(union_coords, all_tris, n_union, all_coeff)

        sys.b_union = np.zeros(n_union)
        for which in ("top", "bottom"):
            row = grid.compact(grid.boundary_row(which))
            uids = fd_union[row]
            half = 0.5 * grid.h
            sys.b_union[uids[:-1]] += half
            sys.b_union[uids[1:]] += half

        # FD operators = union restricted to active FD nodes.
        sub = sp.csr_matrix(sys.K_union[fd_union][:, fd_union])
        sys.K_fd = sub
        sys.mass_fd = sys.mass_union[fd_union]
        sys.b_fd = sys.b_union[fd_union]
        sys.top_fd = grid.compact(grid.boundary_row("top"))
        sys.bottom_fd = grid.compact(grid.boundary_row("bottom"))

        # Exchange pairings, ordered like the grid rings.
        sys.outer_fd = grid.compact(grid.interface_outer)
        sys.outer_fe = fd_union[sys.outer_fd]
        sys.inner_fd = grid.compact(grid.interface_inner)
        sys.inner_fe = fd_union[sys.inner_fd]
        if np.any(sys.outer_fe >= n_fe) or np.any(sys.inner_fe >= n_fe):
            raise ShapeError("exchange ring nodes must coincide with FE vertices")

        # Observation nodes: top row then bottom row.
        obs_fd = grid.compact(grid.observation_nodes())
        sys.obs_union = fd_union[obs_fd]
        sys.obs_coords = union_coords[sys.obs_union]
        sys.obs_weights = sys.b_union[sys.obs_union]
        sys.n_obs_top = len(sys.top_fd)
        return sys

    # -- energy ----------------------------------------------------------

    def energy(self, u: np.ndarray, u_prev: np.ndarray, tau: float) -> float:
        """Scheme-compatible discrete energy of a solution pair.

        Velocity part uses the backward difference over [u_prev, u]; the
        gradient part pairs the two levels so that the interior update
        conserves the value exactly.
        """
        v = (u - u_prev) / tau
        return float(v @ (self.mass_union * v) + u @ (self.K_union @ u_prev))

    def source_norm_sq(self, g_top_series: np.ndarray, tau: float) -> float:
        """Squared L2 norm over the top boundary x time of a scalar flux series."""
        w = self.b_union[self.obs_union[: self.n_obs_top]]
        return float(tau * (np.asarray(g_top_series) ** 2).sum() * w.sum())


def _frame_triangles(grid: FDGrid, fd_union: np.ndarray) -> np.ndarray:
    """Virtual split-square triangles covering cells outside the fem rectangle."""
    nx, ny = grid.nx, grid.ny
    nx1 = nx + 1
    hole = grid.hole
    ic = int(np.searchsorted(grid.x_axis, 0.0))
    tris = []
    for j in range(ny):
        for i in range(nx):
            if hole.contains_cell(i, j):
                continue
            sw = fd_union[grid.compact_of_flat[j * nx1 + i]]
            se = fd_union[grid.compact_of_flat[j * nx1 + i + 1]]
            ne = fd_union[grid.compact_of_flat[(j + 1) * nx1 + i + 1]]
            nw = fd_union[grid.compact_of_flat[(j + 1) * nx1 + i]]
            if cell_splits_up_right(i, ic):
                tris.append((sw, se, ne))
                tris.append((sw, ne, nw))
            else:
                tris.append((sw, se, nw))
                tris.append((se, ne, nw))
    return np.asarray(tris, dtype=np.int64)


@dataclass
class BoundarySchedule:
    """Per-step flux and absorbing switches for the outer top/bottom rows.

    g values are flux data (normal derivative); a values toggle the
    absorbing term. Both rows of the FD frame read them each step.
    """

    g_top: callable  # step index -> scalar or (n_top,) array
    a_top: callable  # step index -> 0.0 or 1.0
    g_bottom: callable
    a_bottom: callable


def hybrid_solve(
    system: HybridSystem,
    tau: float,
    n_steps: int,
    schedule: BoundarySchedule,
    u0: np.ndarray | None = None,
    on_step=None,
) -> np.ndarray:
    """Advance the hybrid scheme and return the (n_steps+1, n_union) history.

    u0 is an optional initial displacement on union nodes (zero velocity is
    always assumed). Raises DivergenceError with the step index if the state
    stops being finite.
    """
    n_fe, n_fd = system.n_fe, system.n_fd
    mass_fe, K_fe = system.mass_fe, system.K_fe
    mass_fd, K_fd, b_fd = system.mass_fd, system.K_fd, system.b_fd
    free = system.fe_free
    tau2 = tau * tau

    hist = np.empty((n_steps + 1, system.n_union))

    if u0 is None:
        u_fe = np.zeros(n_fe)
        u_fd = np.zeros(n_fd)
    else:
        u_fe = u0[:n_fe].copy()
        u_fd = u0[system.fd_to_union].copy()

    def record(row, ufe, ufd):
        hist[row, :n_fe] = ufe
        hist[row, system.fd_to_union] = ufd

    def bc_vectors(step):
        g_vec = np.zeros(n_fd)
        a_vec = np.zeros(n_fd)
        g_vec[system.top_fd] = schedule.g_top(step)
        a_vec[system.top_fd] = schedule.a_top(step)
        g_vec[system.bottom_fd] = schedule.g_bottom(step)
        a_vec[system.bottom_fd] = schedule.a_bottom(step)
        return g_vec, a_vec

    record(0, u_fe, u_fd)

    # First step from rest: the absorbing terms cancel for zero velocity.
    g_vec, _ = bc_vectors(0)
    fe_new = u_fe - 0.5 * tau2 * (K_fe @ u_fe) / mass_fe
    fd_new = u_fd + 0.5 * tau2 * (-(K_fd @ u_fd) + b_fd * g_vec) / mass_fd
    fe_new, fd_new = _exchange(system, fe_new, fd_new)
    prev_fe, u_fe = u_fe, fe_new
    prev_fd, u_fd = u_fd, fd_new
    record(1, u_fe, u_fd)
    if on_step is not None:
        on_step(1, hist)

    for n in range(1, n_steps):
        g_vec, a_vec = bc_vectors(n)

        fe_new = np.empty(n_fe)
        fe_new[free] = (
            2.0 * u_fe[free]
            - prev_fe[free]
            - tau2 * (K_fe @ u_fe)[free] / mass_fe[free]
        )

        damp = 0.5 * tau * b_fd * a_vec
        fd_new = (
            2.0 * mass_fd * u_fd
            - tau2 * (K_fd @ u_fd)
            + tau2 * b_fd * g_vec
            - (mass_fd - damp) * prev_fd
        ) / (mass_fd + damp)

        fe_new, fd_new = _exchange(system, fe_new, fd_new)
        if not (np.isfinite(fd_new).all() and np.isfinite(fe_new[free]).all()):
            raise DivergenceError(f"non-finite field at step {n + 1}", step=n + 1)

        prev_fe, u_fe = u_fe, fe_new
        prev_fd, u_fd = u_fd, fd_new
        record(n + 1, u_fe, u_fd)
        if on_step is not None:
            on_step(n + 1, hist)

    return hist


def _exchange(system: HybridSystem, u_fe: np.ndarray, u_fd: np.ndarray):
    """Two-layer interface exchange; copies make both sides agree bit-exactly."""
    u_fe[system.outer_fe] = u_fd[system.outer_fd]
    u_fd[system.inner_fd] = u_fe[system.inner_fe]
    return u_fe, u_fd


def hybrid_step(
    system: HybridSystem,
    tau: float,
    u: np.ndarray,
    u_prev: np.ndarray,
    g_top=0.0,
    a_top=0.0,
    g_bottom=0.0,
    a_bottom=1.0,
) -> np.ndarray:
    """One mid-run step on union vectors (used by the operator-level tests)."""
    u_fe = u[: system.n_fe].copy()
    u_fd = u[system.fd_to_union].copy()
    p_fe = u_prev[: system.n_fe]
    p_fd = u_prev[system.fd_to_union]

    g_vec = np.zeros(system.n_fd)
    a_vec = np.zeros(system.n_fd)
    g_vec[system.top_fd] = g_top
    a_vec[system.top_fd] = a_top
    g_vec[system.bottom_fd] = g_bottom
    a_vec[system.bottom_fd] = a_bottom

    free = system.fe_free
    tau2 = tau * tau
    fe_new = np.empty(system.n_fe)
    fe_new[free] = (
        2.0 * u_fe[free] - p_fe[free] - tau2 * (system.K_fe @ u_fe)[free] / system.mass_fe[free]
    )
    damp = 0.5 * tau * system.b_fd * a_vec
    fd_new = (
        2.0 * system.mass_fd * u_fd
        - tau2 * (system.K_fd @ u_fd)
        + tau2 * system.b_fd * g_vec
        - (system.mass_fd - damp) * p_fd
    ) / (system.mass_fd + damp)
    fe_new, fd_new = _exchange(system, fe_new, fd_new)

    out = np.empty(system.n_union)
    out[: system.n_fe] = fe_new
    out[system.fd_to_union] = fd_new
    return out
