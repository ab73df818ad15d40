import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shocklab import green
from shocklab.errors import ConfigurationError
from shocklab.lattice import LatticeState

mpmath.mp.dps = 40


def mp_G(n, t):
    if n < 0:
        return mpmath.mpf(0)
    t = mpmath.mpf(t)
    return t ** n * mpmath.e ** (-t) / mpmath.factorial(n)


def test_examples():
    assert green.kernel_G(0, 0.0) == 1.0
    assert green.kernel_G(3, 2.0) == pytest.approx(8 * math.exp(-2) / 6, rel=1e-14)
    assert green.kernel_G(-1, 7.3) == 0.0
    assert green.kernel_dG(5, 5.0) == 0.0
    assert green.kernel_dG(3, 2.0) == pytest.approx(-0.5 * 8 * math.exp(-2) / 6, rel=1e-13)
    assert green.kernel_dG(1, 4.0) > 0


def test_negative_time_rejected():
    with pytest.raises(ConfigurationError):
        green.kernel_G(1, -0.5)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 3000), st.floats(0.0, 3000.0))
def test_matches_mpmath(n, t):
    ref = mp_G(n, t)
    got = green.kernel_G(n, t)
    if ref < mpmath.mpf("1e-290"):
        assert got <= 1e-280
    else:
        # exp(-x) carries relative error x * eps, so the tolerance scales with |ln G|
        tol = 8 * 2.2e-16 * (1 + abs(float(mpmath.log(ref))))
        assert abs(mpmath.mpf(got) - ref) <= tol * ref


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 800), st.floats(0.01, 800.0))
def test_differences_match_mpmath(n, t):
    g = [mp_G(n - k, t) for k in range(3)]
    scale = max(abs(x) for x in g)
    if scale < mpmath.mpf("1e-280"):
        return
    d1 = g[0] - g[1]
    d2 = g[0] - 2 * g[1] + g[2]
    assert abs(mpmath.mpf(green.kernel_dG(n, t)) - d1) <= 1e-12 * scale
    assert abs(mpmath.mpf(green.kernel_d2G(n, t)) - d2) <= 1e-12 * 2 * scale


def test_vectorized_shapes():
    n = np.arange(6).reshape(2, 3)
    out = green.kernel_G(n, 2.0)
    assert out.shape == (2, 3)


def test_identity_mismatch_small():
    rng = np.random.default_rng(1)
    n = rng.integers(-2, 1000, 2000)
    t = rng.uniform(0, 1000, 2000)
    mm = green.identity_mismatch(n, t)
    assert mm["first"] <= 1e-12 and mm["second"] <= 1e-12


@pytest.mark.parametrize("t", [0.0, 0.3, 5.0, 77.7, 500.0])
def test_normalization(t):
    assert green.normalization_defect(t) <= 1e-12


@pytest.mark.parametrize("n,s,t", [(0, 1.0, 2.0), (10, 3.0, 4.0), (300, 120.0, 170.0)])
def test_semigroup(n, s, t):
    assert green.semigroup_defect(n, s, t) <= 1e-12


@pytest.mark.parametrize("t", [0.5, 9.0, 40.0, 333.3])
def test_sign_pattern(t):
    assert green.sign_pattern_violations(t) == []


def test_diagonal_envelope():
    for t in (10, 100, 1000):
        ratio = green.kernel_G(t, float(t)) * math.sqrt(2 * math.pi * t)
        assert ratio <= 1.0
    assert green.kernel_G(1000, 1000.0) * math.sqrt(2000 * math.pi) == pytest.approx(1.0, abs=1e-3)


def test_telescoping():
    assert green.abs_difference_sum(0.0) == pytest.approx(2.0, abs=1e-15)
    for t in (3.5, 50.0, 321.0):
        assert green.abs_difference_sum(t) == pytest.approx(2 * green.kernel_G(int(t), t), abs=1e-12)


def test_kernel_bounds_small_grid():
    rep = green.check_kernel_bounds(n_max=120, t_max=120.0, samples=60)
    assert rep.ok, rep.violations
    assert set(rep.constants) == {"A1_lower_tail", "A1_upper_tail", "A1_weighted_sum"}


def test_kernel_bounds_bad_grid():
    with pytest.raises(ConfigurationError):
        green.check_kernel_bounds(n_max=0)


def test_cutoff_examples():
    c = green.make_cutoff(0.5, 1.5)
    t = 100.0
    x_low = np.arange(80, 100 + 5)        # xbar below a1
    assert np.all(c.chi(x_low, t) == 0)
    assert np.all(c.chi(x_low, t) - c.chi(x_low - 1, t) == 0)
    x_high = np.arange(int(t + 1.5 * 10 + 2), 140)
    assert np.all(c.chi(x_high, t) - c.chi(x_high - 1, t) == 0)
    rep = green.check_cutoff_bounds(green.make_cutoff(0.5, 1.5), [t])
    assert rep["delta"] == 1.0
    assert 0 < rep["worst_ratio"]["first"] <= 1


def test_cutoff_derivative_consistency():
    c = green.make_cutoff(0.3, 1.1)
    x = np.linspace(0.2, 1.2, 501)
    h = 1e-6
    fd = (c.chi0(x + h) - c.chi0(x - h)) / (2 * h)
    assert np.max(np.abs(fd - c.dchi0(x))) < 1e-6
    xx, t = 120.7, 100.0
    fdt = (c.chi(xx, t + h) - c.chi(xx, t - h)) / (2 * h)
    assert float(c.chi_t(xx, t)) == pytest.approx(float(fdt), abs=1e-7)


def test_cutoff_bad_args():
    with pytest.raises(ConfigurationError):
        green.make_cutoff(1.0, 0.5)


def test_homogeneous_residual():
    assert green.homogeneous_residual(40, 10.0, 25.0) <= 1e-12


def test_simpson_weights():
    w = green.simpson_weights(4, 0.5)
    x = np.linspace(0, 2, 5)
    assert w @ x ** 3 == pytest.approx(4.0)
    with pytest.raises(ConfigurationError):
        green.simpson_weights(3, 0.5)


PARAMS = {"alpha": 0.9, "a1": 0.5, "a1_tilde": 1.0}
TIMES = np.round(np.linspace(180.0, 200.0, 801), 10)


def test_representation_constant_field():
    states = [LatticeState(float(t), 0, np.full(400, 0.3), 0.3, 0.3) for t in TIMES]
    r = green.representation_residual(green.LatticeField.from_states(states), None, PARAMS)
    assert r["residual_sup"] <= 1e-10


def test_representation_heat_flow_slice():
    n = np.arange(-300, 800)
    states = [LatticeState(float(t), -300, green.kernel_G(n - 150, np.full(n.size, t - 150.0)), 0.0, 0.0)
              for t in TIMES]
    r = green.representation_residual(green.LatticeField.from_states(states), None, PARAMS)
    assert r["residual_sup"] <= 1e-10


def test_representation_parameter_gates():
    states = [LatticeState(float(t), 0, np.full(400, 0.3), 0.3, 0.3) for t in TIMES]
    fld = green.LatticeField.from_states(states)
    with pytest.raises(ConfigurationError):
        green.representation_residual(fld, None, {"alpha": 0.2, "a1": 0.5, "a1_tilde": 1.0})
    with pytest.raises(ConfigurationError):
        green.representation_residual(fld, None, {"alpha": 0.95, "a1": 0.5, "a1_tilde": 1.0})


def test_field_needs_even_spacing():
    states = [LatticeState(t, 0, np.zeros(3)) for t in (1.0, 2.0, 4.0)]
    with pytest.raises(ConfigurationError):
        green.LatticeField.from_states(states)


def test_ln_plus():
    assert green.ln_plus(0.5) == 0.0
    assert green.ln_plus(math.e) == pytest.approx(1.0)


@pytest.mark.parametrize("t", [1.0, 7.0, 100.0])
def test_integer_time_floor_convention(t):
    k = int(t)
    assert green.kernel_dG(k, t) == 0.0
    assert green.kernel_G(k, t) == pytest.approx(green.kernel_G(k - 1, t), rel=1e-13)
