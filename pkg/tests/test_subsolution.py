import math

import numpy as np
import pytest
from scipy import integrate, special

from shocklab import lattice, subsolution as S
from shocklab.errors import ConfigurationError


def test_psi_right_limit():
    assert S.psi(40.0, 1.0, 0.5) < 1e-300 or S.psi(40.0, 1.0, 0.5) == pytest.approx(0.0, abs=1e-300)
    assert S.psi(8.0, 1.0, 0.5) < 1e-12


@pytest.mark.parametrize("z", [-8.0, -100.0, -1000.0])
def test_psi_left_asymptotics(z):
    C, d1 = 1.0, 0.5
    gap = S.psi(z, C, d1) + 2 * z * C / d1
    # next term of the Laplace expansion is 2 (C/phi') / |z|
    assert gap == pytest.approx(2 * (C / d1) / abs(z), rel=0.05)
    if z <= -400:
        assert abs(gap) < 1e-2


def test_psi_matches_quadrature():
    C, d1 = 1.0, 0.5
    for z in (-3.0, 0.0, 1.5):
        denom = integrate.quad(lambda y: math.exp(-y * y / 2), -np.inf, z)[0]
        ref = 2.0 * (C / d1) * math.exp(-z * z / 2) / denom
        assert S.psi(z, C, d1) == pytest.approx(ref, rel=1e-10)


def test_psi_ode():
    C, d1 = 1.3, 0.7
    z = np.linspace(-6, 6, 121)
    h = 1e-5
    fd = (S.psi(z + h, C, d1) - S.psi(z - h, C, d1)) / (2 * h)
    assert np.allclose(S.dpsi(z, C, d1), fd, rtol=1e-7, atol=1e-10)


def test_psi_hat_monotone():
    rep = S.check_psi_monotone(1.0, 0.5)
    assert rep["ok"]
    assert rep["max_derivative"] < 0


def test_patch_root_equation():
    eps = 0.5
    x = S.patch_root(eps)
    assert x < 0
    lhs = math.exp(-2 * x * x) / (math.sqrt(math.pi / 8) * special.erfc(-math.sqrt(2) * x))
    assert lhs == pytest.approx(-4 * x / (1 - eps), rel=1e-12)
    with pytest.raises(ConfigurationError):
        S.patch_root(1.5)


def test_barrier_residual_sign(degenerate):
    rep = S.check_asymptotic_subsolution(degenerate, S.ShiftSpec(2.25), {"B": 1.75, "A": 6.0},
                                         np.geomspace(1.0, 1e5, 26))
    assert rep["t0_empirical"] is not None
    assert rep["t0_empirical"] > 1.0
    early = [r for t, r in zip(rep["t"], rep["max_residual"]) if t < rep["t0_empirical"]]
    assert max(early) > 0
    assert rep["ok"]


def test_barrier_nondegenerate_rejected(linear):
    with pytest.raises(ConfigurationError):
        S.check_asymptotic_subsolution(linear, S.ShiftSpec(), {"B": 1.75, "A": 6.0}, [100.0])


def test_barrier_region_gate(degenerate):
    with pytest.raises(ConfigurationError):
        S.check_asymptotic_subsolution(degenerate, S.ShiftSpec(), {"B": 6.0, "A": 1.0}, [100.0])


def test_residual_sign_survives_amplitude_change(degenerate):
    xb = np.linspace(1.8, 5.9, 50)
    full = S.subsolution_residual(degenerate, S.ShiftSpec(2.25), xb, 1e4)
    half = S.subsolution_residual(degenerate, S.ShiftSpec(2.25), xb, 1e4, amplitude=0.5)
    assert np.all(full < 0) and np.all(half < 0)


def test_frozen_shift_is_not_a_barrier(degenerate):
    r = S.subsolution_residual(degenerate, S.ShiftSpec(0.0), np.linspace(1.8, 5.9, 50), 1e4)
    assert np.max(r) > 0


def test_upper_inverse(degenerate):
    lo, hi = S.upper_branch(degenerate)
    assert hi == 1.0
    y = np.linspace(lo + 1e-3, 1.0, 17)
    assert np.allclose(S.phi_inverse_upper(degenerate, degenerate(y)), y, atol=1e-12)


def test_patching_margins(degenerate):
    rep = S.check_patching(degenerate, 3.0, np.geomspace(10.0, 1e6, 11))
    assert rep["ok"]
    assert rep["delta"] == pytest.approx(-2 * S.patch_root(0.5))
    late = [m for t, m in zip(rep["t"], rep["min_margin"]) if t >= 1e4]
    assert min(late) > 0


def test_build_gates(degenerate):
    with pytest.raises(ConfigurationError):
        S.build_patched_subsolution(degenerate)
    ext = degenerate.with_negative_extension()
    with pytest.raises(ConfigurationError):
        S.build_patched_subsolution(ext, {"l": 0.9})
    with pytest.raises(ConfigurationError):
        S.build_patched_subsolution(ext, {"bogus": 1.0})


def test_barrier_shape(degenerate):
    sub = S.build_patched_subsolution(degenerate.with_negative_extension())
    t = 5000.0
    b1, b2, b3 = sub.boundaries(t)
    assert b1 < b2 < b3
    n = np.arange(int(b1) - 50, int(b3) + 50)
    v = sub(n, t)
    assert np.all(v <= 1.0)
    assert v[-1] == pytest.approx(1 - sub.delta)
    assert all(not j["upward"] for j in sub.junctions(t))


@pytest.fixture(scope="module")
def step_states(degenerate):
    times = [1000.0, 1500.0, 2000.0]
    rec = lattice.run_lattice(lattice.InitialData("step"), degenerate, 0.0, 2000.0,
                              [lattice.snapshot_observer(times)])
    return rec.snapshots()


def test_comparison_on_step_run(degenerate, step_states):
    sub = S.build_patched_subsolution(degenerate.with_negative_extension())
    rep = S.comparison_check(step_states, sub)
    assert rep["ok"], rep["violations"] + rep["tail_violations"]
    nc = S.negative_control(step_states, sub, T=rep["T"], factor=0.01)
    assert nc["violations"] or nc["tail_violations"]


def test_comparison_delta0_gate(degenerate, step_states):
    sub = S.build_patched_subsolution(degenerate.with_negative_extension())
    with pytest.raises(ConfigurationError):
        S.comparison_check(step_states, sub, delta0=0.9)


def test_rescaled_identity_unit_speed():
    z = np.linspace(-6, 6, 49)
    assert np.allclose(S.psi(z, 1.0, 0.5), S.psi_hat(z / 2, 1.0, 0.5), rtol=1e-13)


def test_psi_positive():
    z = np.linspace(-30, 30, 301)
    assert np.all(S.psi(z[z < 20], 1.0, 0.5) > 0)
    assert np.all(S.psi_hat(z[z < 10], 1.0, 0.5) > 0)
