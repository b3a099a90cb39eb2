import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hslab import kernels
from hslab.coefficients import CoefficientSpec, eval_frame
from hslab.errors import CflViolation, MaxSteps, SupportNearBoundary, ValidationError
from hslab.grid import Grid
from hslab.scenarios import barenblatt
from hslab.solver import (
    SolverConfig, SolverState, cfl_dt, integrate, regularize_initial, run, step,
)

FIG1_M = {"family": "gauss_decay", "ax": 0.1, "at": 1 / 6}


def unit_spec(b=0.0, f=0.0, domain=(-2.0, 2.0), dim=1, m=1.0):
    return CoefficientSpec(m, b, f, 0.05, domain, dim)


def test_zero_is_a_fixed_point_of_step():
    s = unit_spec(b={"family": "sine", "amp": 0.5}, f=0.3)
    g = Grid(1, 40, *s.domain)
    cfg = SolverConfig(k=10, t_end=1.0)
    st0 = SolverState.from_rho(np.zeros(40), np.ones(40), 10, 0.0)
    fr = eval_frame(s, g, 0.0)
    out = step(st0, fr, cfg, g, cfl_dt(st0, fr, cfg, g))
    assert np.all(out.rho == 0) and out.steps == 1


def test_cfl_example_value():
    s = unit_spec()
    g = Grid(1, 160, -2.0, 2.0)
    assert g.h == pytest.approx(0.025)
    cfg = SolverConfig(k=40, t_end=1.0)
    st0 = SolverState.from_rho(np.ones(160), np.ones(160), 40, 0.0)
    dt = cfl_dt(st0, eval_frame(s, g, 0.0), cfg, g)
    assert dt == pytest.approx(0.4 * g.h**2 / 80, rel=1e-6)
    assert dt == pytest.approx(3.1e-6, rel=0.02)


def test_cfl_floor_only_for_zero_state():
    s = unit_spec()
    g = Grid(1, 40, -2.0, 2.0)
    cfg = SolverConfig(k=40, t_end=1.0)
    st0 = SolverState.from_rho(np.zeros(40), np.ones(40), 40, 0.0)
    assert cfl_dt(st0, eval_frame(s, g, 0.0), cfg, g) == pytest.approx(0.4 * g.h**2 / 1e-8)


def test_doubling_k_halves_dt():
    s = unit_spec()
    g = Grid(1, 80, -2.0, 2.0)
    fr = eval_frame(s, g, 0.0)
    rho = np.full(80, 1.0)
    d20 = cfl_dt(SolverState.from_rho(rho, fr.m, 20, 0), fr, SolverConfig(k=20, t_end=1), g)
    d40 = cfl_dt(SolverState.from_rho(rho, fr.m, 40, 0), fr, SolverConfig(k=40, t_end=1), g)
    assert d40 / d20 == pytest.approx(0.5, rel=1e-6)


def test_step_rejects_oversized_dt():
    s = unit_spec()
    g = Grid(1, 40, -2.0, 2.0)
    cfg = SolverConfig(k=10, t_end=1.0)
    st0 = SolverState.from_rho(np.full(40, 0.5), np.ones(40), 10, 0.0)
    fr = eval_frame(s, g, 0.0)
    with pytest.raises(CflViolation):
        step(st0, fr, cfg, g, 2 * cfl_dt(st0, fr, cfg, g))


def test_source_step_grows_interior_by_forward_euler_factor():
    s = unit_spec(f=0.7)
    g = Grid(1, 40, -2.0, 2.0)
    rho = np.where(np.abs(g.x) < 1, 1e-6, 0.0)
    cfg = SolverConfig(k=2, t_end=1.0)
    st0 = SolverState.from_rho(rho, np.ones(40), 2, 0.0)
    fr = eval_frame(s, g, 0.0)
    dt = 0.5 * cfl_dt(st0, fr, cfg, g)
    out = step(st0, fr, cfg, g, dt)
    mid = np.abs(g.x) < 0.5
    np.testing.assert_allclose(out.rho[mid], 1e-6 * (1 + 0.7 * dt), rtol=1e-12)


def test_one_barenblatt_step_is_locally_accurate():
    s = unit_spec()
    g = Grid(1, 400, -2.0, 2.0)
    t0, C = 0.1, 0.25
    rho = barenblatt(g.x, t0, 2, C)
    cfg = SolverConfig(k=2, t_end=1.0)
    st0 = SolverState.from_rho(rho, np.ones(400), 2, 0.0)
    fr = eval_frame(s, g, 0.0)
    dt = cfl_dt(st0, fr, cfg, g)
    out = step(st0, fr, cfg, g, dt)
    exact = barenblatt(g.x, t0 + dt, 2, C)
    core = barenblatt(g.x, t0, 2, C) > 0.5 * rho.max()
    change = np.abs(exact - rho)[core].max()
    assert np.abs(out.rho - exact)[core].max() < 0.05 * change + 1e-12


def test_barenblatt_oracle(barenblatt_run):
    sc, traj = barenblatt_run
    t0 = sc.initial_desc["t0"]
    C = sc.initial_desc["C"]
    g = traj.grid
    exact = barenblatt(g.x, t0 + traj.times[-1], 2, C)
    err = np.sum(g.vol * np.abs(traj.snapshots[-1].rho - exact)) / np.sum(g.vol * exact)
    assert err <= 0.02


def test_zero_initial_data_gives_zero_trajectory():
    s = unit_spec(f=0.5)
    g = Grid(1, 40, -2.0, 2.0)
    tr = run(s, g, np.zeros(40), SolverConfig(k=10, t_end=0.05, n_outputs=5))
    assert all(np.all(snap.rho == 0) for snap in tr.snapshots)
    assert all(r["mass"] == 0 for r in tr.ledger)


def test_regularize_initial_examples():
    np.testing.assert_allclose(regularize_initial(np.zeros(5), np.ones(5), 10), 0.1)
    m = np.linspace(1, 2, 5)
    assert np.max(np.abs(regularize_initial(m, m, 10**9) - m)) <= 1e-8
    np.testing.assert_allclose(regularize_initial(m, m, 1), 2 * m)
    with pytest.raises(ValueError):
        regularize_initial(m, m, 0)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(k=1.0, t_end=1.0)
    with pytest.raises(ValueError):
        SolverConfig(k=2.0, t_end=1.0, cfl_safety=1.5)
    with pytest.raises(ValueError):
        SolverConfig(k=2.0, t_end=1.0, output_times=[0.5, 0.2])
    with pytest.raises(ValueError):
        SolverConfig(k=2.0, t_end=1.0, regularization_n=0)


def test_run_rejects_bad_initial_data():
    s = unit_spec()
    g = Grid(1, 40, -2.0, 2.0)
    rho = np.zeros(40)
    rho[20] = -1.0
    with pytest.raises(ValidationError):
        run(s, g, rho, SolverConfig(k=2, t_end=0.1))


def test_max_steps_guard():
    s = unit_spec()
    g = Grid(1, 40, -2.0, 2.0)
    rho = np.where(np.abs(g.x) < 1, 1.0, 0.0)
    with pytest.raises(MaxSteps) as ei:
        run(s, g, rho, SolverConfig(k=10, t_end=0.5, max_steps=20))
    assert ei.value.trajectories


def test_support_near_boundary_halts():
    s = unit_spec(b={"family": "constant", "value": -3.0})
    g = Grid(1, 80, -2.0, 2.0)
    rho = np.where(np.abs(g.x) < 0.5, 0.5, 0.0)
    with pytest.raises(SupportNearBoundary) as ei:
        run(s, g, rho, SolverConfig(k=4, t_end=2.0))
    tr = ei.value.trajectories[0]
    assert tr.snapshots[-1].t < 2.0


@pytest.mark.skipif("cython" not in kernels.available_backends(), reason="compiled kernel not built")
def test_backends_agree():
    s = CoefficientSpec(FIG1_M, {"family": "sine", "amp": 0.3}, 0.2, 0.05, (-3.0, 3.0))
    g = Grid(1, 120, -3.0, 3.0)
    rho = np.where(np.abs(g.x) <= 1, 0.9 * s.m(g.x, 0.0), 0.0)
    out = {}
    for be in ("cython", "python"):
        out[be] = run(s, g, rho, SolverConfig(k=20, t_end=0.1, n_outputs=4, backend=be))
    np.testing.assert_allclose(out["cython"].snapshots[-1].rho, out["python"].snapshots[-1].rho,
                               rtol=1e-12, atol=1e-14)
    assert out["cython"].snapshots[-1].steps == out["python"].snapshots[-1].steps


def test_regularized_floor_and_radial_mass():
    s = unit_spec(domain=(0.0, 1.6), dim=2)
    g = Grid(2, 80, 0.0, 1.6)
    rho = np.where(g.x <= 0.6, 1.0, 0.0)
    n = 20
    cfg = SolverConfig(k=10, t_end=0.05, n_outputs=5, regularization_n=n)
    tr = integrate(s, g, regularize_initial(rho, np.ones(80), n)[None, :], cfg)[0]
    for snap in tr.snapshots:
        assert snap.rho.min() >= (1 / n) * (1 - 1e-12)


def test_snapshot_fields_are_consistent(fig1):
    g = fig1.grid()
    tr = run(fig1.spec, g, fig1.initial(g), fig1.config(20, t_end=0.1, n_outputs=5))
    assert np.all(np.diff(tr.times) > 0)
    for snap in tr.snapshots:
        m = eval_frame(fig1.spec, g, snap.t).m
        np.testing.assert_allclose(snap.v, snap.rho / m, rtol=1e-15)
        np.testing.assert_allclose(snap.p, 20 / 19 * snap.v**19, rtol=1e-13)


def _random_patch(draw_vals, g):
    rho = np.zeros(g.n_cells)
    lo = g.n_cells // 2 - len(draw_vals) // 2
    rho[lo:lo + len(draw_vals)] = draw_vals
    return rho


@settings(max_examples=15, deadline=None)
@given(
    vals=st.lists(st.floats(0.0, 1.0), min_size=4, max_size=20),
    f=st.floats(-0.5, 1.0),
    bamp=st.floats(-1.0, 1.0),
    k=st.sampled_from([2.0, 5.0, 10.0]),
)
def test_positivity_and_mass_balance(vals, f, bamp, k):
    s = unit_spec(b={"family": "sine", "amp": bamp}, f=f, domain=(-3.0, 3.0))
    g = Grid(1, 60, -3.0, 3.0)
    rho = _random_patch(vals, g)
    tr = run(s, g, rho, SolverConfig(k=k, t_end=0.05, n_outputs=2))
    m0 = max(tr.mass(0), 1e-300)
    resid, clamped = tr.mass_balance()
    assert all(sn.rho.min() >= 0 for sn in tr.snapshots)
    assert abs(resid) <= 1e-8 * m0 + clamped + 1e-300
    assert clamped <= 1e-8 * m0 + 1e-300


@settings(max_examples=10, deadline=None)
@given(
    vals=st.lists(st.floats(0.0, 1.0), min_size=4, max_size=16),
    lift=st.lists(st.floats(0.0, 0.5), min_size=16, max_size=16),
    k=st.sampled_from([2.0, 10.0]),
)
def test_comparison_of_ordered_pairs(vals, lift, k):
    s = unit_spec(b={"family": "sine", "amp": 0.5}, f=0.3, domain=(-3.0, 3.0))
    g = Grid(1, 60, -3.0, 3.0)
    lo = _random_patch(vals, g)
    hi = lo + _random_patch(lift[: len(vals)], g)
    a, b = integrate(s, g, np.stack([lo, hi]), SolverConfig(k=k, t_end=0.05, n_outputs=2))
    hi_sup = max(sn.rho.max() for sn in b.snapshots)
    worst = max(float(np.max(x.rho - y.rho)) for x, y in zip(a.snapshots, b.snapshots))
    assert worst <= 1e-10 * max(hi_sup, 1e-300)


def _coarsen(u):
    return 0.5 * (u[0::2] + u[1::2])


def test_grid_refinement_order():
    s = unit_spec()
    finals = []
    for n in (100, 200, 400):
        g = Grid(1, n, -2.0, 2.0)
        rho0 = barenblatt(g.x, 0.1, 2, 0.25)
        finals.append(run(s, g, rho0, SolverConfig(k=2, t_end=0.1, n_outputs=1)).snapshots[-1].rho)
    h = [4.0 / n for n in (100, 200, 400)]
    d1 = h[0] * np.abs(_coarsen(finals[1]) - finals[0]).sum()
    d2 = h[1] * np.abs(_coarsen(finals[2]) - finals[1]).sum()
    assert d1 / d2 >= 1.7


def test_support_does_not_expand_with_k(fig1_sweep):
    g = fig1_sweep.trajectories[0].grid
    widths = []
    for tr in fig1_sweep.trajectories:
        idx = np.flatnonzero(tr.snapshots[-1].rho > 1e-10)
        widths.append(g.x[idx[-1]] - g.x[idx[0]])
    assert all(b <= a + 2 * g.h for a, b in zip(widths, widths[1:]))
