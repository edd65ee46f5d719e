"""Experiment configuration, synthetic data generation, and artifact output."""

from __future__ import annotations

import configparser
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .export import (
    Manifest,
    read_trace_csv,
    write_iteration_csv,
    write_mesh_vtk,
    write_trace_csv,
    write_union_vtk,
)
from .forward import ObservationTrace, SourceSpec, TimeGrid, TimeSeriesField, forward_solve
from .geometry import DomainGeometry, Rect, build_geometry
from .hybrid import HybridSystem
from .mesh import CoefficientField
from .optimizer import AGCMConfig, run_agcm

MODES = ("forward", "optimize", "optimize_interp_then_refine", "generate_target")


def paper_domain() -> DomainGeometry:
    """Default domain layout used by the shipped example configurations."""
    return DomainGeometry(
        outer=Rect(-1.1, 1.1, -0.62, 0.62),
        fem=Rect(-1.0, 1.0, -0.52, 0.52),
        design=Rect(-0.8, 0.8, -0.4, 0.4),
        shield=Rect(-0.6, 0.6, -0.2, 0.2),
    )


@dataclass
class ExperimentConfig:
    """Everything one run needs; parsed from a sectioned key = value file."""

    domain: DomainGeometry
    h: float
    T: float
    omega: float
    mode: str
    tau: float | None = None
    cfl_safety: float = 0.1
    t1: float | None = None  # None: source duration
    amplitude: float = 1.0
    c0_guess: float = 1.5
    agcm: AGCMConfig = field(default_factory=AGCMConfig)
    out_dir: str = "results"
    snapshot_stride: int = 0
    target_path: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        for name in ("h", "T", "omega"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.amplitude < 0:
            raise ConfigError("amplitude must be non-negative")
        if self.c0_guess < 1.0:
            raise ConfigError("c0_guess must be at least 1")

    def source(self) -> SourceSpec:
        return SourceSpec(omega=self.omega, amplitude=self.amplitude)

    def time_grid(self) -> TimeGrid:
        t1 = self.t1 if self.t1 is not None else self.source().duration
        if self.tau is not None:
            tau = self.tau
        else:
            bound = self.cfl_safety * self.h
            tau = self.T / math.ceil(self.T / bound)
        return TimeGrid(self.T, tau, t1, self.cfl_safety)


def _rect(section, key, path) -> Rect:
    try:
        vals = [float(v) for v in section[key].split()]
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: [geometry] {key} must hold four numbers") from exc
    if len(vals) != 4:
        raise ConfigError(f"{path}: [geometry] {key} must hold four numbers")
    return Rect(*vals)


def _get(section, key, cast, default, path, name):
    raw = section.get(key)
    if raw is None or raw.strip() == "auto":
        return default
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"{path}: [{name}] {key}={raw!r} is not a valid value") from exc


def load_config(path: str, mode: str | None = None,
                out_dir: str | None = None, stride: int | None = None) -> ExperimentConfig:
    """Parse a config file; CLI arguments override the [run] section."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"{path}: config file not found or unreadable")

    if "geometry" not in parser:
        raise ConfigError(f"{path}: missing [geometry] section")
    geo = parser["geometry"]
    domain = DomainGeometry(
        outer=_rect(geo, "outer", path),
        fem=_rect(geo, "fem", path),
        design=_rect(geo, "design", path),
        shield=_rect(geo, "shield", path),
    )
    h = _get(geo, "h", float, None, path, "geometry")
    if h is None:
        raise ConfigError(f"{path}: [geometry] h is required")

    time_sec = parser["time"] if "time" in parser else {}
    src_sec = parser["source"] if "source" in parser else {}
    inv = parser["inversion"] if "inversion" in parser else {}
    run = parser["run"] if "run" in parser else {}

    omega = _get(src_sec, "omega", float, None, path, "source")
    if omega is None:
        raise ConfigError(f"{path}: [source] omega is required")
    T = _get(time_sec, "final_time", float, None, path, "time")
    if T is None:
        raise ConfigError(f"{path}: [time] final_time is required")

    def _budget(raw: str):
        parts = raw.split()
        return int(parts[0]) if len(parts) == 1 else tuple(int(p) for p in parts)

    agcm = AGCMConfig(
        gamma0=_get(inv, "gamma0", float, 0.01, path, "inversion"),
        p_exponent=_get(inv, "p_exponent", float, 0.9, path, "inversion"),
        theta=_get(inv, "theta", float, 1e-5, path, "inversion"),
        max_inner_iters=_get(inv, "max_inner_iters", _budget, 20, path, "inversion"),
        max_refinements=_get(inv, "max_refinements", int, 3, path, "inversion"),
        stabilization_window=_get(inv, "stabilization_window", int, 3, path, "inversion"),
        stabilization_rel_change=_get(inv, "stabilization_rel_change", float, 1e-3,
                                      path, "inversion"),
        delta_fraction=_get(inv, "delta_fraction", float, 0.1, path, "inversion"),
    )

    mode_eff = mode or run.get("mode")
    if mode_eff is None:
        raise ConfigError(f"{path}: mode missing (give it on the command line or in [run])")
    if mode_eff not in MODES:
        raise ConfigError(f"{path}: unknown mode {mode_eff!r}; expected one of {MODES}")
    agcm.interp_then_optimize = mode_eff == "optimize_interp_then_refine"

    return ExperimentConfig(
        domain=domain,
        h=h,
        T=T,
        omega=omega,
        mode=mode_eff,
        tau=_get(time_sec, "tau", float, None, path, "time"),
        cfl_safety=_get(time_sec, "cfl_safety", float, 0.1, path, "time"),
        t1=_get(time_sec, "source_cutoff", float, None, path, "time"),
        amplitude=_get(src_sec, "amplitude", float, 1.0, path, "source"),
        c0_guess=_get(inv, "c0_guess", float, 1.5, path, "inversion"),
        agcm=agcm,
        out_dir=out_dir or run.get("out_dir", "results"),
        snapshot_stride=stride if stride is not None
        else _get(run, "snapshot_stride", int, 0, path, "run"),
        target_path=run.get("target") if run.get("target") else None,
    )


@dataclass
class FourierSnapshot:
    """Per-node discrete-in-time Fourier coefficient at one frequency."""

    real: np.ndarray
    imag: np.ndarray
    omega: float


def fourier_snapshot(field: TimeSeriesField, omega: float, tau: float) -> FourierSnapshot:
    """Sum of u(x, t_k) exp(-i omega t_k) tau over all stored steps."""
    times = np.arange(field.data.shape[0]) * tau
    phase = np.exp(-1j * omega * times)
    coeff = tau * (phase @ field.data)
    return FourierSnapshot(real=coeff.real.copy(), imag=coeff.imag.copy(), omega=omega)


def reflection_metric(trace: ObservationTrace, t_after: float) -> float:
    """Edge-weighted squared trace energy on the top row after a given time."""
    times = trace.tg.times()
    late = times > t_after + 1e-12
    top = trace.top()[late]
    w = trace.weights[: trace.n_top]
    return float(trace.tg.tau * np.sum((top * top) @ w))


def transit_time(domain: DomainGeometry, src: SourceSpec) -> float:
    """Time for the burst to cross the domain at unit speed and fully leave."""
    return domain.outer.height + src.duration


def generate_target(config: ExperimentConfig,
                    tg: TimeGrid | None = None) -> ObservationTrace:
    """Free-propagation reference trace: unit coefficient, no shielded hole."""
    _, mesh, grid = build_geometry(config.domain, config.h, include_shield=False)
    tg = tg or config.time_grid()
    ones = CoefficientField.constant(mesh, 1.0, upper=max(config.c0_guess, 1.0))
    _, trace = forward_solve(mesh, grid, ones, tg, config.source())
    return trace


def _load_target(config: ExperimentConfig, tg: TimeGrid,
                 system: HybridSystem) -> ObservationTrace:
    """Read a stored target trace and validate it against the expected layout."""
    times, coords, data = read_trace_csv(config.target_path)
    if len(times) != tg.n_steps + 1 or not np.allclose(times, tg.times(), atol=1e-12):
        raise ConfigError(f"{config.target_path}: target time grid does not match config")
    if coords.shape != system.obs_coords.shape or not np.allclose(
        coords, system.obs_coords, atol=1e-12
    ):
        raise ConfigError(f"{config.target_path}: target nodes do not match the geometry")
    return ObservationTrace(data, tg, system.obs_coords.copy(),
                            system.obs_weights.copy(), system.n_obs_top)


def run_experiment(config: ExperimentConfig) -> str:
    """Dispatch a configured run and write all artifacts plus the manifest.

    Returns the manifest path.
    """
    os.makedirs(config.out_dir, exist_ok=True)
    manifest = Manifest(config.out_dir)
    out = lambda name: os.path.join(config.out_dir, name)

    _, mesh, grid = build_geometry(config.domain, config.h)
    tg = config.time_grid()
    src = config.source()
    c_max = max(config.c0_guess, 1.0)

    if config.mode == "generate_target":
        trace = generate_target(config, tg)
        write_trace_csv(out("target.csv"), trace)
        manifest.add(out("target.csv"))

    elif config.mode == "forward":
        c = CoefficientField.constant(mesh, config.c0_guess, upper=c_max)
        system = HybridSystem.build(mesh, grid, c)
        field_, trace = forward_solve(mesh, grid, c, tg, src, system=system)
        write_mesh_vtk(out("mesh.vtk"), mesh, cell_data={"coefficient": c.values})
        manifest.add(out("mesh.vtk"))
        write_trace_csv(out("trace.csv"), trace)
        manifest.add(out("trace.csv"))
        snap = fourier_snapshot(field_, config.omega, tg.tau)
        write_union_vtk(out("fourier.vtk"), system,
                        {"fourier_re": snap.real, "fourier_im": snap.imag})
        manifest.add(out("fourier.vtk"))
        if config.snapshot_stride > 0:
            for n in range(0, tg.n_steps + 1, config.snapshot_stride):
                name = out(f"snapshot_{n:06d}.vtk")
                write_union_vtk(name, system, {"u": field_.data[n]})
                manifest.add(name)

    else:  # optimize / optimize_interp_then_refine
        _, ref_mesh, _ = build_geometry(config.domain, config.h, include_shield=False)
        target0 = None
        if config.target_path:
            layout = HybridSystem.build(
                mesh, grid, CoefficientField.constant(mesh, 1.0, upper=c_max)
            )
            target0 = _load_target(config, tg, layout)
        levels = run_agcm(mesh, grid, ref_mesh, config.c0_guess, tg, src, config.agcm,
                          target0=target0)

        rows = [row for lv in levels for row in lv.state.log_rows]
        write_iteration_csv(out("iterations.csv"), rows)
        manifest.add(out("iterations.csv"))
        for lv in levels:
            name = out(f"coefficient_level{lv.level}.vtk")
            write_mesh_vtk(name, lv.mesh, cell_data={"coefficient": lv.coefficient.values})
            manifest.add(name)

        c0 = CoefficientField.constant(mesh, config.c0_guess, upper=c_max)
        _, trace0 = forward_solve(mesh, grid, c0, tg, src)
        final = levels[-1]
        _, trace1 = forward_solve(final.mesh, grid, final.coefficient, final.tg, src)
        t_after = transit_time(config.domain, src)
        summary = {
            "levels": [
                {"level": lv.level, "stop_reason": lv.state.stop_reason,
                 "final_grad_norm": None if math.isnan(lv.state.final_grad_norm)
                 else lv.state.final_grad_norm,
                 "elements": int(len(lv.mesh.triangles))}
                for lv in levels
            ],
            "reflection_initial": reflection_metric(trace0, t_after),
            "reflection_final": reflection_metric(trace1, t_after),
        }
        with open(out("summary.json"), "w") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
            f.write("\n")
        manifest.add(out("summary.json"))

    return manifest.write()
