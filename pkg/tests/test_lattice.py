import filecmp

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from shocklab.errors import ConfigurationError
from shocklab.lattice import (
    InitialData, LatticeState, advance, init_lattice, read_snapshots_csv, run_lattice,
    snapshot_observer, step_lattice, sup_distance_observer, sup_distance_to_profile, write_snapshots_csv,
)
from shocklab.wavetrain import eval_profile


def test_step_data():
    s = init_lattice(InitialData("step"))
    assert set(np.unique(s.values)) == {0.0, 1.0}
    assert np.all(np.diff(s.values) >= 0)
    assert s.at(np.array([-10_000, 10_000])).tolist() == [0.0, 1.0]


def test_wavetrain_data(lattice_profile):
    s = init_lattice(InitialData("wavetrain", profile=lattice_profile, d=3.0))
    assert np.allclose(s.values, eval_profile(lattice_profile, s.n + 3.0), atol=0, rtol=0)
    assert np.all(np.diff(s.values) >= 0)


def test_custom_not_monotone_rejected():
    with pytest.raises(ConfigurationError):
        init_lattice(InitialData("custom", table=[0.0, 0.7, 0.3, 1.0], monotone=True))


def test_custom_out_of_range_rejected():
    with pytest.raises(ConfigurationError):
        init_lattice(InitialData("custom", table=[0.0, 1.3, 1.0]))


def test_unknown_kind():
    with pytest.raises(ConfigurationError):
        init_lattice(InitialData("mystery"))


def test_constant_is_fixed_point(linear):
    s = LatticeState(0.0, -10, np.full(21, 0.4), 0.4, 0.4)
    for _ in range(5):
        step_lattice(s, linear)
    assert np.array_equal(s.values[:21], np.full(21, 0.4)) or np.all(s.values == 0.4)


def test_traveling_wave_exact(lattice_profile, linear):
    d = 3.0
    s = init_lattice(InitialData("wavetrain", profile=lattice_profile, d=d))
    advance(s, linear, 10.0)
    assert s.t == 10.0
    assert sup_distance_to_profile(s, lattice_profile, d) <= 1e-5


def test_matches_independent_ode_solver(degenerate):
    # small window with the step data: compare to an adaptive solver
    s = init_lattice(InitialData("step"), window_hint=(-40, 40))
    y0 = s.values.copy()

    def rhs(_, F):
        prev = np.concatenate(([0.0], F[:-1]))
        return -degenerate(F) * (F - prev)

    ref = solve_ivp(rhs, (0.0, 5.0), y0, method="DOP853", rtol=1e-12, atol=1e-14)
    advance(s, degenerate, 5.0, dt_max=0.01)
    got = s.at(np.arange(-40, 41))
    assert np.max(np.abs(got - ref.y[:, -1])) < 1e-8


@pytest.mark.parametrize("t", [0.5, 7.0, 40.0])
def test_step_monotonicity_preserved(linear, t):
    s = init_lattice(InitialData("step"))
    advance(s, linear, t)
    assert s.increments().min() >= -1e-12
    assert s.monotone_ok and s.bounded_ok


def test_empty_run_returns_initial(linear):
    ob = snapshot_observer([])
    rec = run_lattice(InitialData("step"), linear, 2.0, 2.0, [ob])
    assert ob.records == []
    assert rec.final.t == 2.0
    assert np.array_equal(rec.final.values, init_lattice(InitialData("step")).values)


def test_reverse_times_rejected(linear):
    with pytest.raises(ConfigurationError):
        run_lattice(InitialData("step"), linear, 5.0, 1.0)


def test_sup_distance_decreases(linear, lattice_profile):
    from shocklab.asymptotics import serre_offset_lattice
    first = run_lattice(InitialData("step"), linear, 0.0, 50.0, [snapshot_observer([50.0])]).snapshots()[0]
    D0 = serre_offset_lattice(first, lattice_profile, linear)
    times = [50.0, 100.0, 150.0, 200.0]
    ob = sup_distance_observer(times, lattice_profile, lambda t: D0)
    run_lattice(InitialData("step"), linear, 0.0, 200.0, [ob])
    series = [v for _, v in ob.records]
    assert all(b < a for a, b in zip(series, series[1:]))


def test_sup_distance_examples(lattice_profile):
    n = np.arange(-200, 201)
    exact = LatticeState(0.0, -200, eval_profile(lattice_profile, n.astype(float)))
    assert sup_distance_to_profile(exact, lattice_profile, 0.0) <= 1e-6
    moved = LatticeState(0.0, -200, eval_profile(lattice_profile, n + 0.5))
    fine = np.linspace(-30, 30, 60001)
    oracle = np.max(np.abs(eval_profile(lattice_profile, n + 0.5) - eval_profile(lattice_profile, n.astype(float))))
    assert sup_distance_to_profile(moved, lattice_profile, 0.0) == pytest.approx(oracle, rel=1e-12)
    slope = np.max(np.gradient(eval_profile(lattice_profile, fine), fine))
    assert oracle == pytest.approx(0.5 * slope, rel=0.1)
    flat = LatticeState(0.0, -200, np.zeros(n.size))
    assert sup_distance_to_profile(flat, lattice_profile, 0.0) == pytest.approx(1.0, abs=1e-6)


def test_csv_determinism(tmp_path, degenerate):
    paths = []
    for k in range(2):
        rec = run_lattice(InitialData("step"), degenerate, 0.0, 30.0, [snapshot_observer([10.0, 30.0])])
        p = tmp_path / f"run{k}.csv"
        write_snapshots_csv(p, rec.snapshots())
        paths.append(p)
    assert filecmp.cmp(paths[0], paths[1], shallow=False)
    back = read_snapshots_csv(paths[0])
    assert [s.t for s in back] == [10.0, 30.0]


def test_window_grows_with_front(linear):
    rec = run_lattice(InitialData("step"), linear, 0.0, 300.0)
    s = rec.final
    assert s.n_hi > 1.44 * 300
    # the front lies well inside the window
    assert s.values[-1] > 1 - 1e-12 and s.values[0] < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=30), st.floats(0.1, 20.0))
def test_monotone_data_stays_monotone(levels, t):
    from shocklab.flux import degenerate_quadratic
    table = np.concatenate(([0.0], np.sort(levels), [1.0]))
    s = init_lattice(InitialData("custom", table=table, monotone=True))
    advance(s, degenerate_quadratic(), t)
    assert s.increments().min() >= -1e-12
    assert s.values.min() >= -1e-12 and s.values.max() <= 1 + 1e-12


def test_comparison_principle(lattice_profile, linear):
    lower = init_lattice(InitialData("wavetrain", profile=lattice_profile, d=0.0), window_hint=(-200, 200))
    upper = init_lattice(InitialData("wavetrain", profile=lattice_profile, d=1.5), window_hint=(-200, 200))
    for t in (5.0, 20.0, 60.0):
        advance(lower, linear, t)
        advance(upper, linear, t)
        n = np.arange(min(lower.n_lo, upper.n_lo), max(lower.n_hi, upper.n_hi) + 1)
        assert np.all(upper.at(n) - lower.at(n) >= -1e-10)
