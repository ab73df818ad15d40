"""Traveling shock profiles for the viscous equation and the lattice equation.

Continuous model: the profile solves eps f' = int_alpha^f (phi(y) - C) dy.
Lattice model: the profile solves the forward delay equation
C F'(x) = phi(F(x)) (F(x) - F(x - 1)).

Profiles are tabulated on a uniform grid, anchored so that the midpoint
value (alpha + beta)/2 sits at x = 0, and continued outside the table by
their linearized tails.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from . import _kernels
from .errors import ConfigurationError, NumericFailure
from .flux import CONTINUOUS, LATTICE, DEGENERACY_TOL, FluxFunction, check_model, check_shock_profile

STEPS_PER_UNIT = 64
SEED_GAP = 1e-9
EXP_STOP_GAP = 1e-9
ALG_STOP_GAP = 1e-4
CONTINUOUS_GAP = 1e-10


@dataclass
class WaveTrainProfile:
    """Tabulated monotone profile with tails.

    ``left_tail`` is {"rate", "amp"} with value - alpha = amp*exp(rate*(xi - xi_min)).
    ``right_tail`` is {"kind": "exponential", "rate", "amp"} with
    beta - value = amp*exp(-rate*(xi - xi_max)), or {"kind": "algebraic",
    "coeff", "offset"} with beta - value = coeff/(xi - offset).
    """

    model: str
    C: float
    alpha: float
    beta: float
    xi_min: float
    h: float
    values: np.ndarray
    slopes: np.ndarray
    left_tail: dict
    right_tail: dict
    anchor: float = 0.0
    epsilon: float = 1.0
    label: str = ""
    _spline: Optional[CubicHermiteSpline] = field(default=None, repr=False, compare=False)

    @property
    def xi(self) -> np.ndarray:
        return self.xi_min + self.h * np.arange(self.values.size)

    @property
    def xi_max(self) -> float:
        return self.xi_min + self.h * (self.values.size - 1)

    def spline(self) -> CubicHermiteSpline:
        if self._spline is None:
            self._spline = CubicHermiteSpline(self.xi, self.values, self.slopes)
        return self._spline

    def __call__(self, xi):
        return eval_profile(self, xi)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["xi", "value"])
            for x, v in zip(self.xi, self.values):
                w.writerow([repr(float(x)), repr(float(v))])

    def sidecar(self) -> dict:
        return {"model": self.model, "C": self.C, "alpha": self.alpha, "beta": self.beta,
                "xi_min": self.xi_min, "h": self.h, "n": int(self.values.size),
                "left_tail": self.left_tail, "right_tail": self.right_tail,
                "anchor": self.anchor, "epsilon": self.epsilon, "label": self.label}

    def save(self, csv_path, json_path):
        self.to_csv(csv_path)
        with open(json_path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, csv_path, json_path, phi: Optional[FluxFunction] = None) -> "WaveTrainProfile":
        """Rebuild a profile; slopes are recomputed from the profile equation."""
        with open(json_path) as fh:
            meta = json.load(fh)
        data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
        values = data[:, 1].copy()
        if phi is None:
            slopes = np.gradient(values, meta["h"], edge_order=2)
        elif meta["model"] == LATTICE:
            m = int(round(1.0 / meta["h"]))
            slopes = np.gradient(values, meta["h"], edge_order=2)
            slopes[m:] = phi(values[m:]) * (values[m:] - values[:-m]) / meta["C"]
        else:
            slopes = _continuous_rhs(phi, meta["alpha"], meta["C"], meta["epsilon"], values)
        return cls(meta["model"], meta["C"], meta["alpha"], meta["beta"], meta["xi_min"], meta["h"],
                   values, slopes, meta["left_tail"], meta["right_tail"], meta["anchor"],
                   meta["epsilon"], meta.get("label", ""))


def eval_profile(profile: WaveTrainProfile, xi):
    """Profile value at xi: Hermite interpolation inside the table, tails outside.

    The result is clamped to [alpha, beta].
    """
    p = profile
    x = np.asarray(xi, dtype=float)
    out = np.empty_like(x)
    lo, hi = p.xi_min, p.xi_max
    inside = (x >= lo) & (x <= hi)
    if np.any(inside):
        out[inside] = p.spline()(x[inside])
    left = x < lo
    if np.any(left):
        lt = p.left_tail
        out[left] = p.alpha + lt["amp"] * np.exp(lt["rate"] * (x[left] - lo))
    right = x > hi
    if np.any(right):
        rt = p.right_tail
        if rt["kind"] == "exponential":
            gap = rt["amp"] * np.exp(-rt["rate"] * (x[right] - hi))
        else:
            gap = rt["coeff"] / (x[right] - rt["offset"])
        out[right] = p.beta - gap
    np.clip(out, p.alpha, p.beta, out=out)
    return out[()] if out.ndim == 0 else out


def _continuous_rhs(phi, alpha, C, eps, f):
    f = np.asarray(f, dtype=float)
    return (phi.antiderivative(f) - phi.antiderivative(alpha) - C * (f - alpha)) / eps


def _check_overfall(model, phi, overfall):
    a, b = map(float, overfall)
    if not b > a:
        raise ConfigurationError("overfall requires alpha < beta")
    if a < 0.0 and phi.extension_slope is None:
        raise ConfigurationError("negative left level needs a flux with a negative extension")
    if b > 1.0 or (a < 0.0 and model == CONTINUOUS):
        raise ConfigurationError(f"overfall {overfall} outside the supported range")
    if not check_shock_profile(model, phi, 2000, (a, b)).holds:
        raise ConfigurationError(f"shock-profile condition fails for {phi.label!r} on ({a}, {b})")
    return a, b


def solve_wavetrain_continuous(phi: FluxFunction, epsilon: float = 1.0, overfall=(0.0, 1.0),
                               max_span: float = 2000.0) -> WaveTrainProfile:
    """Profile of the viscous equation from the anchor outwards in both directions.

    The autonomous first-order profile equation is integrated with an
    eighth-order Runge-Kutta method and sampled on the grid h = 1/64.
    """
    if not epsilon > 0:
        raise ConfigurationError("epsilon must be positive")
    a, b = _check_overfall(CONTINUOUS, phi, overfall)
    C = phi.speed(CONTINUOUS, (a, b))
    eps = float(epsilon)
    h = 1.0 / STEPS_PER_UNIT
    mid = 0.5 * (a + b)
    tol = CONTINUOUS_GAP * (b - a)
    right_deg = abs(float(phi(b)) - C) <= DEGENERACY_TOL
    left_deg = abs(float(phi(a)) - C) <= DEGENERACY_TOL

    def rhs(_, y):
        return [float(_continuous_rhs(phi, a, C, eps, y[0]))]

    def branch(direction, target, degenerate):
        def stop(_, y):
            return (target - y[0]) * direction - tol
        stop.terminal = True
        span = max_span * eps
        sol = solve_ivp(rhs, (0.0, direction * span), [mid], method="DOP853", rtol=1e-13,
                        atol=1e-16 * (b - a), events=None if degenerate else stop, dense_output=True)
        if sol.status == -1:
            raise NumericFailure(f"profile integration failed: {sol.message}")
        end = abs(sol.t[-1])
        n = int(np.floor(end / h))
        grid = direction * h * np.arange(n + 1)
        return sol.sol(grid)[0] if n > 0 else np.array([mid])

    right = branch(+1.0, b, right_deg)
    left = branch(-1.0, a, left_deg)
    values = np.concatenate([left[:0:-1], right])
    values = np.clip(values, a, b)
    xi_min = -h * (left.size - 1)
    slopes = _continuous_rhs(phi, a, C, eps, values)
    lam = (float(phi(a)) - C) / eps
    if left_deg:
        raise ConfigurationError("degenerate left level is not supported for tabulated profiles")
    left_tail = {"rate": lam, "amp": float(values[0] - a)}
    right_tail = _right_tail(b, C, float(phi(b)), float(phi.deriv(b)), values, xi_min + h * (values.size - 1),
                             right_deg, mu=(C - float(phi(b))) / eps, coeff=2.0 * eps / max(float(phi.deriv(b)), 1e-300))
    return WaveTrainProfile(CONTINUOUS, C, a, b, xi_min, h, values, slopes, left_tail, right_tail,
                            0.0, eps, phi.label)


def _right_tail(b, C, phib, dphib, values, xi_end, degenerate, mu, coeff):
    gap = float(b - values[-1])
    if degenerate or mu <= 0:
        if dphib <= 0:
            raise ConfigurationError("algebraic right tail requires phi'(beta) > 0")
        return {"kind": "algebraic", "coeff": float(coeff), "offset": float(xi_end - coeff / max(gap, 1e-300))}
    return {"kind": "exponential", "rate": float(mu), "amp": gap}


def _tail_root(f, lo=1e-9, hi=1.0):
    """Positive root of a tail dispersion relation; f(lo) and f(hi) must differ in sign."""
    s0 = np.sign(f(lo))
    while np.sign(f(hi)) == s0:
        hi *= 2.0
        if hi > 1e6:
            raise ConfigurationError("no positive tail rate")
    return optimize.brentq(f, lo, hi, xtol=1e-15, rtol=1e-15)


def solve_wavetrain_lattice(phi: FluxFunction, overfall=(0.0, 1.0), seed_gap: float = SEED_GAP,
                            max_span: Optional[float] = None) -> WaveTrainProfile:
    """Profile of the lattice equation by the method of steps.

    The left tail is seeded with the linearized exponential history and the
    delay equation is integrated forward with classical RK4 at h = 1/64 until
    the gap to beta falls below 1e-9 (exponential tail) or 1e-4 (degenerate
    algebraic tail), or the table reaches ``max_span`` units beyond the anchor.
    """
    a, b = _check_overfall(LATTICE, phi, overfall)
    C = phi.speed(LATTICE, (a, b))
    phia, phib = float(phi(a)), float(phi(b))
    if not phia > C * (1.0 + 1e-14):
        raise ConfigurationError(f"no positive left tail rate: phi(alpha)={phia} <= C={C}")
    lam = _tail_root(lambda x: -phia * np.expm1(-x) - C * x, lo=1e-14)
    right_deg = abs(phib - C) <= DEGENERACY_TOL
    stop_gap = (ALG_STOP_GAP if right_deg else EXP_STOP_GAP) * (b - a)
    m = STEPS_PER_UNIT
    h = 1.0 / m
    eps0 = seed_gap * (b - a)

    hist = h * np.arange(-m, 1)
    est = 1024 if not right_deg else int(1.5 * C / (max(float(phi.deriv(b)), 1e-3) * ALG_STOP_GAP)) + 1024
    if max_span is not None:
        est = min(est, int(max_span) + 512)
    F = np.empty(est * m)
    D = np.empty_like(F)
    F[: m + 1] = a + eps0 * np.exp(lam * hist)
    D[: m + 1] = lam * eps0 * np.exp(lam * hist)
    filled = m + 1
    breaks, coefs, ext, phi0 = phi.packed()
    anchor_idx = None
    mid = 0.5 * (a + b)
    while True:
        limit = F.size
        if max_span is not None and anchor_idx is not None:
            limit = min(limit, anchor_idx + int(max_span * m) + 1)
        res = _kernels.delay_rk4(F[:limit], D[:limit], filled, m, h, C, b, stop_gap,
                                 breaks, coefs, ext, phi0)
        if res < 0:
            raise NumericFailure("non-finite value in the delay integration",
                                 snapshot={"filled": -res})
        filled = res
        if anchor_idx is None and F[filled - 1] >= mid:
            anchor_idx = int(np.searchsorted(F[:filled], mid))
        if b - F[filled - 1] < stop_gap:
            break
        if max_span is not None and anchor_idx is not None and filled >= limit:
            break
        if filled >= F.size:
            if F.size > 80_000_000:
                raise NumericFailure("profile table exceeded the size limit")
            F = np.concatenate([F, np.empty_like(F)])
            D = np.concatenate([D, np.empty_like(D)])
            continue
    values = F[:filled].copy()
    slopes = D[:filled].copy()
    if np.any(np.diff(values) <= 0):
        raise NumericFailure("profile table is not strictly increasing")
    spline = CubicHermiteSpline(h * np.arange(filled), values, slopes)
    k = int(np.searchsorted(values, mid))
    x_star = optimize.brentq(lambda x: float(spline(x)) - mid, h * (k - 1), h * k, xtol=1e-15)
    xi_min = -x_star
    mu = 0.0
    if not right_deg and phib < C:
        with np.errstate(over="ignore"):
            mu = _tail_root(lambda x: phib * np.expm1(x) - C * x, lo=1e-14)
    xi_end = xi_min + h * (filled - 1)
    dphib = float(phi.deriv(b))
    right_tail = _right_tail(b, C, phib, dphib, values, xi_end, right_deg, mu,
                             coeff=C / max(dphib, 1e-300))
    if right_tail["kind"] == "exponential" and not right_deg and b - values[-1] > 1e-6 and dphib > 0:
        # capped near-degenerate table: the slow exponential is not yet visible
        right_tail = {"kind": "algebraic", "coeff": C / dphib,
                      "offset": float(xi_end - (C / dphib) / (b - values[-1]))}
    left_tail = {"rate": lam, "amp": float(values[0] - a)}
    return WaveTrainProfile(LATTICE, C, a, b, xi_min, h, values, slopes, left_tail, right_tail,
                            0.0, 1.0, phi.label)


def solve_wavetrain(model: str, phi: FluxFunction, **kw) -> WaveTrainProfile:
    model = check_model(model)
    if model == CONTINUOUS:
        return solve_wavetrain_continuous(phi, **kw)
    return solve_wavetrain_lattice(phi, **kw)


def lattice_residual(profile: WaveTrainProfile, phi: FluxFunction) -> np.ndarray:
    """|C F' - phi(F)(F(x) - F(x-1))| at table points at least one unit from the left edge.

    F' comes from a sixth-order central difference of the table, so the check
    does not reuse the slopes produced by the integrator.
    """
    v = profile.values
    h = profile.h
    m = int(round(1.0 / h))
    d = (-v[:-6] + 9 * v[1:-5] - 45 * v[2:-4] + 45 * v[4:-2] - 9 * v[5:-1] + v[6:]) / (60.0 * h)
    j = np.arange(3, v.size - 3)
    keep = j >= m
    j, d = j[keep], d[keep]
    return np.abs(profile.C * d - phi(v[j]) * (v[j] - v[j - m]))


def continuous_residual(profile: WaveTrainProfile, phi: FluxFunction) -> np.ndarray:
    """|eps f' - int_alpha^f (phi - C)| with f' from a sixth-order difference of the table."""
    v = profile.values
    h = profile.h
    d = (-v[:-6] + 9 * v[1:-5] - 45 * v[2:-4] + 45 * v[4:-2] - 9 * v[5:-1] + v[6:]) / (60.0 * h)
    f = v[3:-3]
    return np.abs(profile.epsilon * d - profile.epsilon * _continuous_rhs(phi, profile.alpha, profile.C,
                                                                          profile.epsilon, f))
