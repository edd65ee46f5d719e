"""Adaptive conjugate-gradient reconstruction of the design coefficient.

Inner loop: forward solve, adjoint solve, gradient, Fletcher-Reeves update
with the regularization weight decaying as gamma0 / (m+1)^p, and projection
onto the admissible box. Outer loop: refine the design region, rebuild the
time grid under the CFL bound, carry the coefficient to the new mesh by
neighbour-averaged interpolation and restart with it as both initial guess
and regularization reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adjoint import ResidualSource, adjoint_solve
from .errors import AcousticaError, ParameterError
from .forward import ObservationTrace, SourceSpec, TimeGrid, forward_solve, solver_h_min
from .grid import FDGrid
from .hybrid import HybridSystem
from .mesh import CoefficientField, TriMesh, interpolate_coefficient, refine_symmetric
from .objective import GradientField, TikhonovConfig, assemble_gradient, evaluate_functional


class Converged(AcousticaError):
    """Signal raised when the search direction vanishes."""


@dataclass
class AGCMConfig:
    """Knobs of the adaptive conjugate-gradient loop.

    max_inner_iters may be a single budget or a per-level sequence (the last
    entry repeats for deeper levels).
    """

    gamma0: float = 0.01
    p_exponent: float = 0.9
    theta: float = 1e-5
    max_inner_iters: int | tuple = 20
    max_refinements: int = 3
    stabilization_window: int = 3
    stabilization_rel_change: float = 1e-3
    delta_fraction: float = 0.1  # taper width as a fraction of T
    interp_then_optimize: bool = False

    def __post_init__(self):
        if not (0.0 < self.p_exponent < 1.0):
            raise ParameterError("p_exponent must lie strictly inside (0, 1)")
        for name in ("gamma0", "theta", "stabilization_rel_change", "delta_fraction"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        budgets = self.max_inner_iters
        if isinstance(budgets, int):
            budgets = (budgets,)
        if len(budgets) < 1 or any(b < 1 for b in budgets) or self.max_refinements < 0:
            raise ParameterError("iteration counts out of range")
        if self.stabilization_window < 1:
            raise ParameterError("stabilization_window must be at least 1")

    def inner_budget(self, level: int) -> int:
        if isinstance(self.max_inner_iters, int):
            return self.max_inner_iters
        seq = tuple(self.max_inner_iters)
        return int(seq[min(level, len(seq) - 1)])


@dataclass
class OptimizerState:
    """Per-level record of the inner iteration."""

    level: int
    m: int = 0
    gamma_m: float = 0.0
    history: list = field(default_factory=list)  # (m, grad_norm, functional)
    log_rows: list = field(default_factory=list)  # dicts for the iteration CSV
    stop_reason: str = "max_iter"

    @property
    def final_grad_norm(self) -> float:
        return self.history[-1][1] if self.history else float("nan")


def regularization_weight(m: int, cfg: AGCMConfig) -> float:
    """Decaying regularization gamma0 / (m+1)^p."""
    return cfg.gamma0 / (m + 1) ** cfg.p_exponent


def cg_direction(
    g: GradientField,
    g_prev: GradientField | None,
    d_prev: GradientField | None,
) -> GradientField:
    """Fletcher-Reeves direction; restarts to steepest descent at m=0."""
    if g_prev is None or d_prev is None:
        return g.scaled(-1.0)
    denom = g_prev.norm() ** 2
    if denom == 0.0:
        return g.scaled(-1.0)
    beta = g.norm() ** 2 / denom
    return GradientField(g.mesh, -g.values + beta * d_prev.values)


def step_size(g: GradientField, d: GradientField, gamma_m: float) -> float:
    """Step length -((g, d)) / (gamma ||d||^2), area-weighted inner products."""
    if gamma_m <= 0.0:
        raise ParameterError("gamma_m must be positive")
    dnorm2 = d.norm() ** 2
    if dnorm2 == 0.0:
        raise Converged("search direction vanished")
    return -g.inner(d) / (gamma_m * dnorm2)


def update_coefficient(c: CoefficientField, d: GradientField, alpha: float) -> CoefficientField:
    """Coefficient update clamped to the admissible box; off-design untouched."""
    out = c.copy()
    out.values = out.values + alpha * d.values
    out.clamp()
    return out


def _stabilized(norms: list, window: int, rel_change: float) -> bool:
    if len(norms) < window + 1:
        return False
    recent = norms[-(window + 1):]
    span = max(recent) - min(recent)
    return span <= rel_change * abs(recent[-1])


def run_inner_loop(
    mesh: TriMesh,
    grid: FDGrid,
    c0: CoefficientField,
    c_ref: CoefficientField,
    target: ObservationTrace,
    tg: TimeGrid,
    src: SourceSpec,
    cfg: AGCMConfig,
    level: int = 0,
) -> tuple[CoefficientField, OptimizerState]:
    """Conjugate-gradient iteration on a fixed mesh and time grid."""
    delta = cfg.delta_fraction * tg.T
    c = c0.copy()
    state = OptimizerState(level=level)
    g_prev = d_prev = None
    norms: list[float] = []

    for m in range(cfg.inner_budget(level)):
        gamma_m = regularization_weight(m, cfg)
        state.m, state.gamma_m = m, gamma_m
        tik = TikhonovConfig(gamma=gamma_m, c_ref=c_ref, delta=delta, gamma0=cfg.gamma0)

        system = HybridSystem.build(mesh, grid, c)
        try:
            u_hist, trace = forward_solve(mesh, grid, c, tg, src, system=system)
            residual = ResidualSource.from_traces(trace, target, delta)
            lam_hist = adjoint_solve(mesh, grid, c, tg, residual, system=system)
        except AcousticaError as exc:
            raise type(exc)(f"level {level}, iteration {m}: {exc}") from exc

        f_value = evaluate_functional(trace, target, c, tik)
        g = assemble_gradient(u_hist, lam_hist, c, tik, mesh)
        gn = g.norm()
        norms.append(gn)
        state.history.append((m, gn, f_value))
        row = {"level": level, "m": m, "gamma": gamma_m, "alpha": float("nan"),
               "grad_norm": gn, "functional": f_value}
        state.log_rows.append(row)

        if gn <= cfg.theta:
            state.stop_reason = "tolerance"
            break
        if _stabilized(norms, cfg.stabilization_window, cfg.stabilization_rel_change):
            state.stop_reason = "stabilized"
            break

        d = cg_direction(g, g_prev, d_prev)
        try:
            alpha = step_size(g, d, gamma_m)
        except Converged:
            state.stop_reason = "tolerance"
            break
        row["alpha"] = alpha
        c = update_coefficient(c, d, alpha)
        g_prev, d_prev = g, d
    else:
        state.stop_reason = "max_iter"

    return c, state


@dataclass
class LevelResult:
    level: int
    mesh: TriMesh
    tg: TimeGrid
    coefficient: CoefficientField
    state: OptimizerState


def run_agcm(
    mesh: TriMesh,
    grid: FDGrid,
    reference_mesh: TriMesh,
    c0_guess: float,
    tg0: TimeGrid,
    src: SourceSpec,
    cfg: AGCMConfig,
    target0: ObservationTrace | None = None,
) -> list[LevelResult]:
    """Full adaptive loop over refinement levels.

    The trace target is the free-propagation field: unit coefficient on the
    reference mesh, which fills the fem rectangle without the shielded hole.
    It is regenerated on each level's time grid (the supplied target0, if
    any, is used for the initial level). In the interp-then-optimize mode
    the coarse optimum is only interpolated through the intermediate levels
    and optimization happens again on the finest one.
    """
    c_max = max(c0_guess, 1.0)
    c = CoefficientField.constant(mesh, c0_guess, upper=c_max)
    c_ref = c.copy()
    tg = tg0

    results: list[LevelResult] = []
    for level in range(cfg.max_refinements + 1):
        tg.check_cfl(solver_h_min(mesh, grid))
        if level == 0 and target0 is not None:
            target = target0
        else:
            ones = CoefficientField.constant(reference_mesh, 1.0, upper=c_max)
            _, target = forward_solve(reference_mesh, grid, ones, tg, src)

        interp_only = cfg.interp_then_optimize and 0 < level < cfg.max_refinements
        if interp_only:
            state = OptimizerState(level=level, stop_reason="interp_only")
        else:
            c, state = run_inner_loop(mesh, grid, c, c_ref, target, tg, src, cfg, level)
        results.append(LevelResult(level, mesh, tg, c, state))

        if level == cfg.max_refinements:
            break
        if (
            not cfg.interp_then_optimize
            and level > 0
            and state.stop_reason != "max_iter"
            and results[-2].state.stop_reason != "max_iter"
        ):
            # Levels that ran out of budget carry budget-limited norms, not
            # mesh-limited ones; only converged levels are compared.
            prev = results[-2].state.final_grad_norm
            last = state.final_grad_norm
            increased = last >= prev
            flat = abs(last - prev) <= cfg.stabilization_rel_change * abs(prev)
            if increased or flat:
                break

        mesh = refine_symmetric(mesh)
        c = interpolate_coefficient(c, mesh)
        c_ref = c.copy()
        tg = tg.halved()

    return results
