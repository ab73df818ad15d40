import numpy as np
import pytest

from shocklab import pde
from shocklab.errors import ConfigurationError


def test_constant_state_unchanged(linear):
    g = pde.init_grid("custom", (-5, 5), 0.05, fn=lambda x: np.full_like(x, 0.4), alpha=0.4, beta=0.4)
    dt = pde.cfl_limit(0.05, 1.0, linear)
    out = pde.step_pde(g, linear, dt)
    assert np.array_equal(out.values, g.values)


def test_cfl_gate(linear):
    assert pde.cfl_limit(0.05, 1.0, linear) == pytest.approx(0.9 * 0.00125)
    g = pde.init_grid("step", (-5, 5), 0.05)
    with pytest.raises(ConfigurationError):
        pde.step_pde(g, linear, 0.01)


def test_bad_grid():
    with pytest.raises(ConfigurationError):
        pde.init_grid("step", (1, -1), 0.05)
    with pytest.raises(ConfigurationError):
        pde.init_grid("step", (-1, 1), 0.0)
    with pytest.raises(ConfigurationError):
        pde.init_grid("ramp", (-1, 1), 0.1)


def _distance(prof, phi, dx, t):
    g = pde.init_grid("wavetrain", (-40.0, 40.0), dx, 1.0, profile=prof)
    return pde.sup_distance_to_profile(pde.run_pde(g, phi, t).final, prof, 0.0)


def test_first_order_convergence(logistic, linear):
    errs = [_distance(logistic, linear, dx, 5.0) for dx in (0.1, 0.05, 0.025)]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates >= 0.8)


@pytest.mark.xfail(strict=True, reason="first-order upwind diffusion gives about 7e-3 at t = 20")
def test_logistic_wave_t20(logistic, linear):
    assert _distance(logistic, linear, 0.05, 20.0) <= 5e-3


def test_step_run_bounded(linear):
    g = pde.init_grid("step", (-20, 20), 0.1)
    rec = pde.run_pde(g, linear, 10.0, [2.0, 5.0])
    assert rec.metadata["bounded_ok"]
    assert [s.t for s in rec.snapshots] == [2.0, 5.0]
    assert np.all(np.diff(rec.final.values) >= -1e-12)


def test_best_shift(logistic):
    g = pde.init_grid("wavetrain", (-40.0, 40.0), 0.05, 1.0, profile=logistic, d=0.3)
    shift, dist = pde.best_shift_distance(g, logistic)
    assert shift == pytest.approx(0.3, abs=1e-6)
    assert dist < 1e-6


def _snapshots(fn, times, dx=0.2, x_range=(-60, 60)):
    g = pde.init_grid("custom", x_range, dx, alpha=0.0, beta=0.0, fn=fn)
    return pde.run_pde(g, pde_phi(), max(times), times).snapshots


def pde_phi():
    from shocklab.flux import shipped_flux
    return shipped_flux("linear_2my")


def test_gradient_zero_field():
    snaps = _snapshots(lambda x: np.zeros_like(x), [50.0, 100.0], x_range=(-10, 300))
    rep = pde.gradient_estimate_check(snaps, 1.0, (1, 3), 50.0, 2.0)
    assert rep["sup_ratio"] == 0.0


@pytest.mark.parametrize("amp", [0.2, -0.2])
def test_gradient_hump_bounded(amp):
    phi = pde_phi()
    snaps = _snapshots(lambda x: amp * np.exp(-x ** 2 / 4), [50.0, 100.0, 200.0, 400.0])
    rep = pde.gradient_estimate_check(snaps, 1.0, (1, 3), 50.0, phi.phi0)
    assert not rep["aborted"]
    assert rep["sup_ratio"] < 1.0
    assert rep["trend"]["slope"] <= 0.1


def test_gradient_abort_on_large_data():
    g = pde.init_grid("step", (-20, 80), 0.2, alpha=0.0, beta=1.0)
    snaps = pde.run_pde(g, pde_phi(), 20.0, [10.0, 20.0]).snapshots
    rep = pde.gradient_estimate_check(snaps, 0.1, (-1, 1), 0.0, 1.5)
    assert rep["aborted"] and rep["violations"]


def test_gradient_empty_region():
    snaps = _snapshots(lambda x: np.zeros_like(x), [5.0])
    with pytest.raises(ConfigurationError):
        pde.gradient_estimate_check(snaps, 1.0, (100, 101), 0.0, 2.0)


def test_maximum_principle(linear):
    g = pde.init_grid("custom", (-30, 30), 0.1, alpha=0.2, beta=0.7,
                      fn=lambda x: np.where(x < 0, 0.2, 0.7))
    lo, hi = g.values.min(), g.values.max()
    for t in (1.0, 4.0, 8.0):
        pde.advance(g, linear, t)
        assert g.values.min() >= lo - 1e-10 and g.values.max() <= hi + 1e-10
