import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acoustica import (
    CoefficientField,
    ParameterError,
    ResidualSource,
    SourceSpec,
    TimeGrid,
    adjoint_solve,
    compatibility_weight,
    forward_solve,
)
from acoustica.hybrid import HybridSystem, hybrid_step


def make_setup(coarse_built, omega=40.0, T=1.0, c_design=1.5):
    _, mesh, grid = coarse_built
    tg = TimeGrid(T=T, tau=0.01, t1=2 * np.pi / omega)
    src = SourceSpec(omega=omega)
    ones = CoefficientField.constant(mesh, 1.0, upper=3.0)
    _, target = forward_solve(mesh, grid, ones, tg, src)
    c = CoefficientField.constant(mesh, c_design, upper=3.0)
    field, trace = forward_solve(mesh, grid, c, tg, src)
    return mesh, grid, tg, src, c, field, trace, target


# -- terminal taper -----------------------------------------------------------

def test_taper_plateau_and_terminal_zero():
    assert compatibility_weight(0.0, 2.0, 0.2) == 1.0
    assert compatibility_weight(1.8, 2.0, 0.2) == 1.0
    assert compatibility_weight(1.9, 2.0, 0.2) == 0.0
    assert compatibility_weight(2.0, 2.0, 0.2) == 0.0
    # midpoint of the blend: cubic gives exactly 1/2
    assert compatibility_weight(1.85, 2.0, 0.2) == pytest.approx(0.5, abs=1e-15)


def test_taper_monotone_on_fine_grid():
    t = np.linspace(0.0, 2.0, 101)
    w = compatibility_weight(t, 2.0, 0.2)
    assert np.all(np.diff(w) <= 1e-15)
    assert w[0] == 1.0 and w[-1] == 0.0
    # closed-form cubic on the blend interval
    s = (1.85 - 1.8) / 0.1
    assert compatibility_weight(1.85, 2.0, 0.2) == pytest.approx(1 - s * s * (3 - 2 * s))


@given(st.floats(min_value=1e-3, max_value=1.999), st.floats(min_value=0.0, max_value=2.0))
@settings(max_examples=200, deadline=None)
def test_taper_range_property(delta, t):
    w = compatibility_weight(t, 2.0, delta)
    assert 0.0 <= w <= 1.0


def test_taper_rejects_bad_delta():
    with pytest.raises(ParameterError):
        compatibility_weight(0.5, 1.0, 0.0)
    with pytest.raises(ParameterError):
        compatibility_weight(0.5, 1.0, 1.5)


# -- residual bookkeeping ------------------------------------------------------

def test_residual_vanishes_on_taper_support(coarse_built):
    mesh, grid, tg, src, c, field, trace, target = make_setup(coarse_built)
    delta = 0.2
    res = ResidualSource.from_traces(trace, target, delta)
    times = tg.times()
    late = times >= tg.T - delta / 2 - 1e-12
    assert np.all(res.data[late] == 0.0)
    assert res.data.shape == trace.data.shape


# -- adjoint solves ------------------------------------------------------------

def test_zero_residual_gives_zero_adjoint(coarse_built):
    mesh, grid, tg, src, c, field, trace, target = make_setup(coarse_built)
    res = ResidualSource.from_traces(trace, trace, 0.1 * tg.T)
    lam = adjoint_solve(mesh, grid, c, tg, res)
    assert np.all(lam.data == 0.0)


def test_adjoint_vanishes_near_final_time(coarse_built):
    mesh, grid, tg, src, c, field, trace, target = make_setup(coarse_built)
    delta = 0.1 * tg.T
    res = ResidualSource.from_traces(trace, target, delta)
    lam = adjoint_solve(mesh, grid, c, tg, res)
    assert np.abs(lam.data).max() > 0.0
    times = tg.times()
    late = times >= tg.T - delta / 2 - 1e-12
    assert np.abs(lam.data[late]).max() <= 1e-12


def test_adjoint_mirror_symmetry(coarse_built):
    mesh, grid, tg, src, c, field, trace, target = make_setup(coarse_built)
    res = ResidualSource.from_traces(trace, target, 0.1 * tg.T)
    lam = adjoint_solve(mesh, grid, c, tg, res)
    mirror = mesh.mirror_vertex_map()
    n_fe = len(mesh.vertices)
    mid = lam.data[lam.data.shape[0] // 2][:n_fe]
    assert np.abs(mid - mid[mirror]).max() < 1e-9


def test_adjoint_stable_at_paper_parameters(paper_built):
    _, mesh, grid = paper_built
    for omega in (40.0, 60.0, 80.0, 100.0):
        tg = TimeGrid(T=2.0, tau=0.002, t1=2 * np.pi / omega)
        src = SourceSpec(omega=omega)
        ones = CoefficientField.constant(mesh, 1.0, upper=2.5)
        _, target = forward_solve(mesh, grid, ones, tg, src)
        c = CoefficientField.constant(mesh, 1.5, upper=2.5)
        _, trace = forward_solve(mesh, grid, c, tg, src)
        res = ResidualSource.from_traces(trace, target, 0.1 * tg.T)
        lam = adjoint_solve(mesh, grid, c, tg, res)
        lam.check_finite()


# -- one-step operators are mutually adjoint -----------------------------------

def test_step_operators_adjoint_in_weighted_inner_product(coarse_built):
    _, mesh, grid = coarse_built
    c = CoefficientField.constant(mesh, 1.5, upper=2.5)
    system = HybridSystem.build(mesh, grid, c)
    n = system.n_union
    tau = 0.01
    L = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        L[:, i] = hybrid_step(system, tau, e, np.zeros(n), a_top=1.0, a_bottom=1.0)
    # the backward stepper applies the same update, so its matrix equals L;
    # adjointness is with respect to the lumped-mass inner product
    coords = system.union_coords
    g = grid.geometry
    support = (
        (np.abs(coords[:, 0]) < g.design.x1max)
        & (np.abs(coords[:, 1]) < g.design.x2max)
        & ~((np.abs(coords[:, 0]) < g.shield.x1max + 0.05)
            & (np.abs(coords[:, 1]) < g.shield.x2max + 0.05))
    )
    rng = np.random.default_rng(5)
    M = system.mass_union
    for _ in range(20):
        a = np.zeros(n)
        b = np.zeros(n)
        a[support] = rng.standard_normal(int(support.sum()))
        b[support] = rng.standard_normal(int(support.sum()))
        lhs = (L @ a) @ (M * b)
        rhs = a @ (M * (L @ b))
        assert abs(lhs - rhs) <= 1e-8 * max(abs(lhs), abs(rhs))
