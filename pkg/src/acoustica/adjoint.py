"""Adjoint wave problem, integrated backward from the final time.

The adjoint field starts from zero terminal data and is driven by the
weighted observation residual entering as a boundary flux on the top and
bottom rows. With the substitution s = T - t the problem becomes a forward
run of the same hybrid scheme, with the absorbing switch on the top row
active exactly where the forward problem had it (t > t1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .forward import ObservationTrace, TimeGrid, TimeSeriesField, solver_h_min
from .grid import FDGrid
from .hybrid import BoundarySchedule, HybridSystem, hybrid_solve
from .mesh import CoefficientField, TriMesh


def compatibility_weight(t, T: float, delta: float):
    """Terminal taper: 1 up to T-delta, 0 from T-delta/2 on, cubic between.

    The cubic blend is monotone with zero slope at both ends, so the weight
    is C^1 and the residual force vanishes identically near the final time,
    which keeps the adjoint's zero terminal conditions compatible.
    """
    if not (0.0 < delta < T):
        raise ParameterError(f"delta must lie in (0, T), got delta={delta}, T={T}")
    t = np.asarray(t, dtype=float)
    s = np.clip((t - (T - delta)) / (0.5 * delta), 0.0, 1.0)
    out = 1.0 - s * s * (3.0 - 2.0 * s)
    return float(out) if out.ndim == 0 else out


@dataclass
class ResidualSource:
    """Taper-weighted observation residual (u - target) on the trace nodes."""

    data: np.ndarray  # (n_steps+1, n_obs)
    tg: TimeGrid
    coords: np.ndarray
    n_top: int
    delta: float

    @classmethod
    def from_traces(cls, trace: ObservationTrace, target: ObservationTrace,
                    delta: float) -> "ResidualSource":
        if not trace.matches(target):
            raise ShapeError("trace and target live on different nodes or time grids")
        z = compatibility_weight(trace.tg.times(), trace.tg.T, delta)
        data = (trace.data - target.data) * z[:, None]
        return cls(data=data, tg=trace.tg, coords=trace.coords,
                   n_top=trace.n_top, delta=delta)

    def top(self) -> np.ndarray:
        return self.data[:, : self.n_top]

    def bottom(self) -> np.ndarray:
        return self.data[:, self.n_top :]


def adjoint_schedule(tg: TimeGrid, residual: ResidualSource) -> BoundarySchedule:
    """Boundary data for the backward run, indexed by the backward step."""
    n_steps, t1, tau = tg.n_steps, tg.t1, tg.tau
    top = residual.top()
    bottom = residual.bottom()

    def g_top(n):  # residual enters with a minus sign
        return -top[n_steps - n]

    def a_top(n):  # absorbing exactly where the forward top row absorbs
        t = (n_steps - n) * tau
        return 0.0 if t <= t1 + 1e-15 else 1.0

    def g_bottom(n):
        return -bottom[n_steps - n]

    return BoundarySchedule(g_top=g_top, a_top=a_top,
                            g_bottom=g_bottom, a_bottom=lambda n: 1.0)


def adjoint_solve(
    mesh: TriMesh,
    grid: FDGrid,
    c: CoefficientField,
    tg: TimeGrid,
    residual: ResidualSource,
    system: HybridSystem | None = None,
    on_step=None,
) -> TimeSeriesField:
    """Solve the adjoint problem; the returned history is indexed by forward time."""
    if residual.data.shape[0] != tg.n_steps + 1:
        raise ShapeError("residual step count does not match the time grid")
    tg.check_cfl(solver_h_min(mesh, grid), float(c.values.min()))
    if system is None:
        system = HybridSystem.build(mesh, grid, c)

    hist = hybrid_solve(system, tg.tau, tg.n_steps, adjoint_schedule(tg, residual),
                        on_step=on_step)
    return TimeSeriesField(hist[::-1].copy(), tg, system)
