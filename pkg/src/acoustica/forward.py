"""Forward wave problem: plane-wave flux on the top edge, absorbing outflow.

Boundary regime of the outer rectangle:
  top     flux p(t) while t <= t1, absorbing afterwards
  bottom  absorbing for all t
  sides   rigid (zero flux)
The shielded hole wall is rigid as well; waves never enter the hole.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError, StabilityError
from .grid import FDGrid
from .hybrid import BoundarySchedule, HybridSystem, hybrid_solve
from .mesh import CoefficientField, TriMesh


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time partition of (0, T] with source cutoff t1."""

    T: float
    tau: float
    t1: float
    cfl_safety: float = 0.1

    def __post_init__(self):
        if self.T <= 0 or self.tau <= 0:
            raise ParameterError("T and tau must be positive")
        if not (0.0 < self.t1 < self.T):
            raise ParameterError(f"t1 must lie in (0, T), got t1={self.t1}, T={self.T}")
        n = self.T / self.tau
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ParameterError(f"tau={self.tau} must divide T={self.T} evenly")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.tau))

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.tau

    def check_cfl(self, h_min: float, c_min: float = 1.0) -> None:
        bound = self.cfl_safety * h_min * math.sqrt(c_min)
        if self.tau > bound * (1.0 + 1e-12):
            raise StabilityError(
                f"tau={self.tau} exceeds CFL bound {bound:.6g} "
                f"(cfl_safety={self.cfl_safety}, h_min={h_min:.6g})"
            )

    def halved(self) -> "TimeGrid":
        return TimeGrid(self.T, self.tau / 2.0, self.t1, self.cfl_safety)


@dataclass(frozen=True)
class SourceSpec:
    """Single-burst plane wave driven through the top boundary flux."""

    omega: float
    amplitude: float = 1.0
    f0: object = None  # optional initial displacement, callable (x1, x2) -> value

    def __post_init__(self):
        if self.omega <= 0:
            raise ParameterError("omega must be positive")

    @property
    def duration(self) -> float:
        return 2.0 * math.pi / self.omega


def plane_wave_source(t: float, spec: SourceSpec):
    """Flux value of the plane-wave burst: sin(omega*t) inside one period."""
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < spec.duration)
    out = np.where(inside, spec.amplitude * np.sin(spec.omega * t), 0.0)
    return float(out) if out.ndim == 0 else out


class TimeSeriesField:
    """Nodal solution history on the union of FE vertices and FD nodes."""

    def __init__(self, data: np.ndarray, tg: TimeGrid, system: HybridSystem):
        if data.shape != (tg.n_steps + 1, system.n_union):
            raise ShapeError(
                f"history shape {data.shape} does not match "
                f"{(tg.n_steps + 1, system.n_union)}"
            )
        self.data = data
        self.tg = tg
        self.system = system

    @property
    def node_coords(self) -> np.ndarray:
        return self.system.union_coords

    def check_finite(self) -> None:
        if not np.isfinite(self.data).all():
            raise ShapeError("field history contains non-finite values")


class ObservationTrace:
    """Solution restricted to the observation nodes (top and bottom rows)."""

    def __init__(self, data, tg: TimeGrid, coords, weights, n_top: int):
        if data.shape != (tg.n_steps + 1, len(coords)):
            raise ShapeError("trace shape does not match node set / step count")
        self.data = data
        self.tg = tg
        self.coords = coords
        self.weights = weights
        self.n_top = n_top

    @property
    def n_nodes(self) -> int:
        return self.data.shape[1]

    def top(self) -> np.ndarray:
        return self.data[:, : self.n_top]

    def bottom(self) -> np.ndarray:
        return self.data[:, self.n_top :]

    def matches(self, other: "ObservationTrace") -> bool:
        return (
            self.data.shape == other.data.shape
            and self.n_top == other.n_top
            and np.array_equal(self.coords, other.coords)
            and abs(self.tg.tau - other.tg.tau) < 1e-15
        )


def forward_schedule(tg: TimeGrid, src: SourceSpec) -> BoundarySchedule:
    tau, t1 = tg.tau, tg.t1

    def g_top(n):
        return plane_wave_source(n * tau, src)

    def a_top(n):
        return 0.0 if n * tau <= t1 + 1e-15 else 1.0

    return BoundarySchedule(g_top=g_top, a_top=a_top,
                            g_bottom=lambda n: 0.0, a_bottom=lambda n: 1.0)


def solver_h_min(mesh: TriMesh, grid: FDGrid) -> float:
    """Smallest element diameter across both subdomains."""
    return min(mesh.min_diameter(), math.sqrt(2.0) * grid.h)


def forward_solve(
    mesh: TriMesh,
    grid: FDGrid,
    c: CoefficientField,
    tg: TimeGrid,
    src: SourceSpec,
    system: HybridSystem | None = None,
    on_step=None,
) -> tuple[TimeSeriesField, ObservationTrace]:
    """Run the hybrid explicit scheme; returns full history and the trace."""
    if src.duration >= tg.T:
        raise ParameterError("source duration must be shorter than final time T")
    tg.check_cfl(solver_h_min(mesh, grid), float(c.values.min()))
    if system is None:
        system = HybridSystem.build(mesh, grid, c)

    u0 = None
    if src.f0 is not None:
        xy = system.union_coords
        u0 = np.asarray(src.f0(xy[:, 0], xy[:, 1]), dtype=float)

    hist = hybrid_solve(system, tg.tau, tg.n_steps, forward_schedule(tg, src),
                        u0=u0, on_step=on_step)
    field = TimeSeriesField(hist, tg, system)
    trace = ObservationTrace(
        hist[:, system.obs_union].copy(), tg, system.obs_coords.copy(),
        system.obs_weights.copy(), system.n_obs_top,
    )
    return field, trace


def discrete_energy(field: TimeSeriesField, c: CoefficientField, step: int) -> float:
    """Coefficient-weighted kinetic plus gradient energy at a time step.

    Uses the backward-difference velocity over [step-1, step] and pairs the
    two levels in the gradient term, matching the solver's own quadrature so
    the value is exactly conserved by interior updates.
    """
    if step < 1:
        raise ParameterError("energy needs step >= 1 for the backward difference")
    if c is not field.system.coefficient and not np.array_equal(
        c.values, field.system.coefficient.values
    ):
        raise ShapeError("coefficient does not match the one the history was computed with")
    return field.system.energy(field.data[step], field.data[step - 1], field.tg.tau)
