"""Shift functional d_A(t), logarithmic fits, a priori difference checks and offsets.

d_A(t) is the root d of

    S(d) = sum_{k <= N} [Phi(F(k,t)) - Phi(F~(k - Ct + d))]
           + kappa [Phi(F(N+1,t)) - Phi(F~(N+1 - Ct + d))],

with N = floor(Ct + A sqrt(t)) and kappa = Ct + A sqrt(t) - N. S is
increasing in d because Phi decreases and F~ increases.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import ConfigurationError, NumericFailure
from .flux import FluxFunction
from .lattice import LatticeState
from .wavetrain import WaveTrainProfile, eval_profile

TERM_TOL = 1e-14
BRACKET_LIMIT = 1e4


def _profile_left_edge(profile: WaveTrainProfile, level: float = 1e-16) -> float:
    """xi below which F~ - alpha < level."""
    lt = profile.left_tail
    if lt["amp"] <= level or lt["rate"] <= 0:
        return profile.xi_min
    return profile.xi_min + math.log(level / lt["amp"]) / lt["rate"]


def shift_sum(state: LatticeState, profile: WaveTrainProfile, phi: FluxFunction, A: float, d: float) -> float:
    """S(d) for the state at its time."""
    t, C = state.t, profile.C
    pos = C * t + A * math.sqrt(t)
    N = math.floor(pos)
    kappa = pos - N
    k_lo = min(state.n_lo, math.floor(C * t - d + _profile_left_edge(profile)) - 1)
    k = np.arange(k_lo, N + 2)
    F = state.at(k)
    Ft = eval_profile(profile, k - C * t + d)
    terms = phi.Phi(F) - phi.Phi(Ft)
    w = np.ones(k.size)
    w[-1] = kappa
    return float(np.dot(w, terms))


def compute_dA(state: LatticeState, profile: WaveTrainProfile, phi: FluxFunction, A: float,
               guess: Optional[float] = None) -> float:
    """Root of S(d) = 0 by a bracketed solve to 1e-10."""
    C = profile.C
    if not A > 2.0 * math.sqrt(C):
        raise ConfigurationError(f"A={A} must exceed 2 sqrt(C)={2 * math.sqrt(C):.6g}")
    if np.any(state.increments() < -1e-12):
        raise ConfigurationError("d_A needs a monotone state")
    if guess is None:
        mid = 0.5 * (profile.alpha + profile.beta)
        j = int(np.searchsorted(state.values, mid))
        guess = C * state.t - (state.n_lo + j)

    def S(d):
        return shift_sum(state, profile, phi, A, d)

    lo, hi, step = guess - 1.0, guess + 1.0, 1.0
    slo, shi = S(lo), S(hi)
    while slo > 0 or shi < 0:
        step *= 2.0
        if step > 2 * BRACKET_LIMIT:
            raise NumericFailure("no bracket for d_A within [-1e4, 1e4]")
        if slo > 0:
            lo = max(guess - step, -BRACKET_LIMIT)
            slo = S(lo)
        if shi < 0:
            hi = min(guess + step, BRACKET_LIMIT)
            shi = S(hi)
    if slo == 0:
        return lo
    if shi == 0:
        return hi
    return float(optimize.brentq(S, lo, hi, xtol=1e-10, rtol=1e-14))


@dataclass
class ShiftTrace:
    A: float
    times: np.ndarray
    d_values: np.ndarray
    d_prime: np.ndarray = field(default=None)
    fit: Optional[dict] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.d_values = np.asarray(self.d_values, dtype=float)
        if self.times.size != self.d_values.size:
            raise ConfigurationError("times and d_values differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ConfigurationError("trace times must increase strictly")
        if not np.all(np.isfinite(self.d_values)):
            raise ConfigurationError("trace holds non-finite d values")
        if self.d_prime is None:
            self.d_prime = numeric_derivative(self.times, self.d_values)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "d_A", "t_dA_prime"])
            for t, d, dp in zip(self.times, self.d_values, self.d_prime):
                w.writerow([repr(float(t)), repr(float(d)), repr(float(t * dp))])


def numeric_derivative(times, values, spacing: int = 10) -> np.ndarray:
    """Centered differences over +-spacing samples; one-sided near the ends."""
    t = np.asarray(times, float)
    v = np.asarray(values, float)
    n = t.size
    out = np.full(n, np.nan)
    if n < 2:
        return out
    s = max(1, min(spacing, (n - 1) // 2)) if n > 2 else 1
    for i in range(n):
        lo, hi = max(0, i - s), min(n - 1, i + s)
        if hi > lo:
            out[i] = (v[hi] - v[lo]) / (t[hi] - t[lo])
    return out


def shift_trace(states: Sequence[LatticeState], profile, phi, A) -> ShiftTrace:
    d, guess = [], None
    for s in states:
        guess = compute_dA(s, profile, phi, A, guess)
        d.append(guess)
    return ShiftTrace(A, [s.t for s in states], d)


def fit_log_shift(trace: ShiftTrace, window=None, min_samples: int = 50) -> dict:
    """Least squares d = gamma_hat ln t + const_hat over the window (default [t_end/10, t_end])."""
    t, d = trace.times, trace.d_values
    if window is None:
        window = (t[-1] / 10.0, t[-1])
    lo, hi = window
    m = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12))
    tm, dm = t[m], d[m]
    if tm.size < min_samples:
        raise ConfigurationError(f"fit window holds {tm.size} samples; need {min_samples}")
    if tm[-1] / tm[0] < 10.0 * (1 - 1e-9):
        raise ConfigurationError("fit window must span at least one decade of t")
    X = np.column_stack([np.log(tm), np.ones_like(tm)])
    coef, *_ = np.linalg.lstsq(X, dm, rcond=None)
    rms = float(np.sqrt(np.mean((X @ coef - dm) ** 2)))
    fit = {"gamma_hat": float(coef[0]), "const_hat": float(coef[1]), "window": [float(lo), float(hi)],
           "rms": rms, "samples": int(tm.size)}
    trace.fit = fit
    return fit


def noise_floor(phi: FluxFunction, C: float) -> float:
    """Slope threshold for non-degenerate runs: 0.05 C / max(|phi'(0)|, |phi'(1)|)."""
    return 0.05 * C / max(abs(phi.dphi0), abs(phi.dphi1))


def diagnostic_2_15(state: LatticeState, profile: WaveTrainProfile, phi: FluxFunction, A: float,
                    d_prime: float, d: Optional[float] = None) -> dict:
    """Compare a measured d_A' with the right-hand side assembled from boundary values.

    rhs = C(1-k)(F1-F) - C(1-k)(G1-G) + A(1-G1)/(2 sqrt t) + phi'(1)(1-G1)^2/2
          - [A(1-F1)/(2 sqrt t) + phi'(1)(1-F1)^2/2]
    with F, F1 the solution at N, N+1 and G, G1 the shifted profile there.
    """
    t, C = state.t, profile.C
    if d is None:
        d = compute_dA(state, profile, phi, A)
    pos = C * t + A * math.sqrt(t)
    N = math.floor(pos)
    kappa = pos - N
    F, F1 = state.at(np.array([N, N + 1]))
    G, G1 = eval_profile(profile, np.array([N, N + 1]) - C * t + d)
    p1 = phi.dphi1
    rt = math.sqrt(t)
    rhs = (C * (1 - kappa) * (F1 - F) - C * (1 - kappa) * (G1 - G)
           + A * (1 - G1) / (2 * rt) + 0.5 * p1 * (1 - G1) ** 2
           - (A * (1 - F1) / (2 * rt) + 0.5 * p1 * (1 - F1) ** 2))
    return {"t": t, "lhs": float(d_prime), "rhs": float(rhs), "gap": float(d_prime - rhs), "d": float(d)}


# ---- a priori difference estimates -----------------------------------------------------

FIELDS = ("F", "1-F", "F-beta")


def select_field(state: LatticeState, name: str) -> np.ndarray:
    if name == "F":
        return state.values
    if name == "1-F":
        return 1.0 - state.values
    if name == "F-beta":
        return state.values - state.beta
    raise ConfigurationError(f"unknown field selector {name!r}; expected one of {FIELDS}")


def log_slope(times, values) -> float:
    """Least-squares slope of log(values) against log(times); values must be positive."""
    t = np.asarray(times, float)
    v = np.asarray(values, float)
    ok = v > 0
    if ok.sum() < 2:
        return 0.0
    return float(np.polyfit(np.log(t[ok]), np.log(v[ok]), 1)[0])


def _apriori(states, region, Gamma, C, field_name, weighted, t_min, trend_tol):
    a1, a2 = region["a1"], region["a2"]
    rows, violations, neg = [], [], []
    samples = []
    for s in states:
        if s.t < t_min:
            continue
        rt = math.sqrt(C * s.t)
        n = s.n
        xbar = (n - C * s.t) / rt
        m = (xbar > a1) & (xbar < a2)
        if not np.any(m):
            raise ConfigurationError(f"region ({a1}, {a2}) holds no lattice point at t={s.t}")
        u = select_field(s, field_name)
        dF = s.increments()
        samples.append((s, m, xbar, u, dF))
    if not samples:
        raise ConfigurationError("no sample times at or beyond t_min")
    w = (lambda x: x) if weighted else (lambda x: np.ones_like(x))
    if Gamma is None:
        Gamma = max(float(np.max(np.abs(u[m]) * math.sqrt(C * s.t) / w(xbar[m]))) for s, m, xbar, u, _ in samples)
        Gamma_source = "empirical"
    else:
        Gamma_source = "given"
    for s, m, xbar, u, dF in samples:
        bound = Gamma * w(xbar[m]) / math.sqrt(C * s.t)
        bad = np.abs(u[m]) > bound * (1 + 1e-9)
        if np.any(bad):
            violations.extend((int(n), float(s.t)) for n in s.n[m][bad][:20])
        if np.any(dF[m] < -1e-12):
            neg.extend((int(n), float(s.t)) for n in s.n[m][dF[m] < -1e-12][:20])
        norm = dF[m] * C * s.t / (Gamma * w(xbar[m])) if Gamma > 0 else np.zeros(int(m.sum()))
        rows.append((float(s.t), float(np.max(norm))))
    report = {"Gamma": Gamma, "Gamma_source": Gamma_source, "region": region, "field": field_name,
              "hypothesis_violations": violations[:50], "negative_increments": neg[:50]}
    if violations:
        report.update({"aborted": True, "sup_normalized": None, "trend": rows, "slope": None, "ok": False})
        return report
    sups = np.array([r[1] for r in rows])
    times = np.array([r[0] for r in rows])
    slope = log_slope(times, sups) if np.all(sups > 0) else 0.0
    report.update({"aborted": False, "sup_normalized": float(sups.max()), "trend": rows,
                   "slope": slope, "ok": (not neg) and slope <= trend_tol})
    return report


def apriori_check_thm2ii(states: Sequence[LatticeState], region: dict, Gamma: Optional[float] = None,
                         C: float = 1.0, field_name: str = "F-beta", t_min: float = 0.0,
                         trend_tol: float = 0.05) -> dict:
    """sup of Delta F * C t / (Gamma xbar) over a1 < xbar < a2, after checking |u| <= Gamma xbar / sqrt(Ct).

    Gamma=None measures the smallest admissible Gamma from the data. The
    trend is the log-log slope of the per-time sup, required to be at most
    ``trend_tol``.
    """
    return _apriori(states, region, Gamma, C, field_name, True, t_min, trend_tol)


def apriori_check_thm2ii_prime(states: Sequence[LatticeState], region: dict, Gamma: Optional[float] = None,
                               C: float = 1.0, field_name: str = "F", t_min: float = 0.0,
                               trend_tol: float = 0.05, phi: Optional[FluxFunction] = None,
                               strict: bool = True) -> dict:
    """As apriori_check_thm2ii with the xbar-free normalization Delta F * C t / Gamma.

    In strict mode the flux must satisfy phi'(0) >= 0.
    """
    if strict and phi is not None and phi.dphi0 < 0:
        raise ConfigurationError("strict mode needs phi'(0) >= 0")
    rep = _apriori(states, region, Gamma, C, field_name, False, t_min, trend_tol)
    rep["strict"] = bool(strict)
    return rep


# ---- offsets ---------------------------------------------------------------------------

def serre_offset_lattice(state: LatticeState, profile: WaveTrainProfile, phi: FluxFunction,
                         guess: float = 0.0) -> float:
    """D0 with sum_n [Phi(F~(n - Ct + D0)) - Phi(F(n))] = 0 (t = state.t; t = 0 gives the offset proper)."""
    C, t = profile.C, state.t
    if profile.right_tail["kind"] == "algebraic":
        raise ConfigurationError("profile tail 1/xi is not summable; the offset is undefined")
    lo_edge = _profile_left_edge(profile)
    rt = profile.right_tail
    span = profile.beta - profile.alpha
    if abs(state.values[0] - state.alpha) > 1e-8 * span or abs(state.beta - state.values[-1]) > 1e-8 * span:
        raise ConfigurationError("data does not settle to alpha and beta inside the window")

    def total(D):
        hi_edge = profile.xi_max + math.log(max(rt["amp"], 1e-300) / 1e-17) / rt["rate"]
        k_lo = min(state.n_lo, math.floor(C * t - D + lo_edge) - 1)
        k_hi = max(state.n_hi, math.ceil(C * t - D + hi_edge) + 1)
        k = np.arange(k_lo, k_hi + 1)
        terms = phi.Phi(eval_profile(profile, k - C * t + D)) - phi.Phi(state.at(k))
        if abs(terms[0]) + abs(terms[-1]) > 1e-8:
            raise ConfigurationError("partial sums are not Cauchy; data outside the integrable class")
        return float(terms.sum())

    # the sum decreases in D
    lo, hi, step = guess - 1.0, guess + 1.0, 1.0
    while total(lo) < 0 or total(hi) > 0:
        step *= 2
        if step > 2 * BRACKET_LIMIT:
            raise NumericFailure("no bracket for the offset")
        lo, hi = guess - step, guess + step
    return float(optimize.brentq(total, lo, hi, xtol=1e-11, rtol=1e-14))


def serre_offset_continuous(x, f, profile: WaveTrainProfile, guess: float = 0.0) -> float:
    """d0 with int (f(x) - f~(x + d0)) dx = 0 over a uniform grid.

    The integral is evaluated on the grid by the trapezoidal rule, which is
    adequate when the grid resolves both profiles.
    """
    x = np.asarray(x, float)
    f = np.asarray(f, float)
    a, b = profile.alpha, profile.beta
    if abs(f[0] - a) > 1e-8 or abs(f[-1] - b) > 1e-8:
        raise ConfigurationError("data must reach alpha and beta at the grid ends")
    dx = x[1] - x[0]

    def total(d):
        return float(np.trapezoid(f - eval_profile(profile, x + d), dx=dx))

    lo, hi, step = guess - 1.0, guess + 1.0, 1.0
    while total(lo) < 0 or total(hi) > 0:
        step *= 2
        if step > 2 * BRACKET_LIMIT:
            raise NumericFailure("no bracket for the offset")
        lo, hi = guess - step, guess + step
    return float(optimize.brentq(total, lo, hi, xtol=1e-12, rtol=1e-14))


def serre_offsets(initial, profile: WaveTrainProfile, phi: Optional[FluxFunction] = None) -> dict:
    """Offset of the limiting wave: D0 for a LatticeState (needs phi), d0 for a grid with ``x`` and ``values``."""
    if isinstance(initial, LatticeState):
        if phi is None:
            raise ConfigurationError("the lattice offset needs the flux")
        return {"D0": serre_offset_lattice(initial, profile, phi)}
    return {"d0": serre_offset_continuous(initial.x, initial.values, profile)}


def write_fit_json(path, fit: dict, Gamma0: float):
    out = dict(fit)
    out["Gamma0_theory"] = Gamma0
    out["ratio"] = fit["gamma_hat"] / Gamma0 if Gamma0 else None
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
