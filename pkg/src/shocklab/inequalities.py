"""Numeric versions of two integral inequalities.

* A Gronwall-type bound: v(t) <= A + int_alpha^1 h(rho) v(rho t) drho for
  t >= t0 implies v(t) <= A1 + M t^{-m}, with A1 = A / (1 - int h) and
  m the root of I(m) = int_alpha^1 h(rho) rho^{-m} drho = 1.
* A weighted-log bound: int_0^a psi(x) ln_+(b/(a - x)) dx <= A_psi (1 + ln_+(b/a))
  for integrable psi = O(1/x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, interpolate, optimize

from .errors import ConfigurationError, InternalConsistencyError, NumericFailure
from .flux import quad

M_LIMIT = 200.0
GAUSS_NODES = 64


@dataclass
class GronwallProblem:
    A: float
    alpha: float
    h: Callable[[np.ndarray], np.ndarray]
    t0: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError("alpha must lie in (0, 1)")
        if self.A < 0 or self.t0 <= 0:
            raise ConfigurationError("need A >= 0 and t0 > 0")
        self.mass = quad(lambda r: float(self.h(r)), self.alpha, 1.0)
        if not 0.0 < self.mass < 1.0:
            raise ConfigurationError(f"weight mass {self.mass} is not in (0, 1)")

    def I(self, m: float) -> float:
        return quad(lambda r: float(self.h(r)) * r ** (-m), self.alpha, 1.0)


def constant_weight(value: float, alpha: float) -> Callable:
    """h = value on [alpha, 1]."""
    return lambda r: value * np.ones_like(np.asarray(r, dtype=float))


def lemma_a2_solve(p: GronwallProblem) -> dict:
    """A1 in closed form and the exponent m with I(m) = 1 by bracket expansion and bisection."""
    A1 = p.A / (1.0 - p.mass)
    lo, hi = 0.0, 1.0
    while p.I(hi) < 1.0:
        lo, hi = hi, 2.0 * hi
        if hi > M_LIMIT:
            raise NumericFailure("no exponent m <= 200 with I(m) = 1; weight too concentrated near 1")
    m = optimize.bisect(lambda x: p.I(x) - 1.0, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=200)
    return {"A1": A1, "m": m, "I_at_m": p.I(m), "mass": p.mass}


class _Operator:
    """(T v)(t) = A + int_alpha^1 h(rho) v(rho t) drho with Gauss-Legendre nodes."""

    def __init__(self, p: GronwallProblem, nodes: int = GAUSS_NODES):
        x, w = np.polynomial.legendre.leggauss(nodes)
        half = 0.5 * (1.0 - p.alpha)
        self.rho = p.alpha + half * (x + 1.0)
        self.w = half * w * np.asarray(p.h(self.rho), dtype=float)
        self.A = p.A

    def __call__(self, v: Callable, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        vals = v(np.outer(t, self.rho))
        return self.A + vals @ self.w


def lemma_a2_check(p: GronwallProblem, v0: Callable, horizon: float = 1e4, per_segment: int = 400,
                   max_iter: int = 200, tol: float = 1e-13) -> dict:
    """Iterates v_{k+1} = T v_k on a geometric grid over [t0, horizon t0].

    v is held at the seed on the initial window [t0, t0/alpha]; beyond it
    the iterate is a cubic spline in log t. M is the smallest constant with
    v0 <= A1 + M t^{-m} on the initial window. Every iterate is compared
    with that bound; ``first_within`` is the first iteration from which on
    all iterates respect it (the seed itself need not satisfy the
    inequality) and ``ok`` requires the converged iterate to respect it.
    """
    sol = lemma_a2_solve(p)
    A1, m = sol["A1"], sol["m"]
    t0, t1 = p.t0, p.t0 / p.alpha
    segs = math.log(horizon) / math.log(1.0 / p.alpha)
    n = int(math.ceil(segs * per_segment)) + 1
    logt = np.linspace(math.log(t0), math.log(t0 * horizon), n)
    t = np.exp(logt)
    window = t <= t1 * (1.0 + 1e-14)
    seed = np.asarray(v0(t), dtype=float)
    tw = np.linspace(t0, t1, 2001)
    M = max(0.0, float(np.max((np.asarray(v0(tw), dtype=float) - A1) * tw ** m)))
    bound = A1 + M * t ** (-m)
    op = _Operator(p)
    v = seed.copy()
    history = []
    excess = [float(np.max(v - bound))]
    prev_change = math.inf
    monotone = True
    for k in range(max_iter):
        spline = interpolate.CubicSpline(logt, v)
        nv = v.copy()
        nv[~window] = op(lambda s: spline(np.log(s)), t[~window])
        change = float(np.max(np.abs(nv - v)))
        if not np.all(np.isfinite(nv)) or (k > 5 and change > 2.0 * prev_change and change > 1e-8):
            raise InternalConsistencyError("iteration diverges; contraction lost")
        monotone = monotone and bool(np.all(nv <= v + 1e-12 * np.maximum(1.0, np.abs(v))))
        v = nv
        excess.append(float(np.max(v - bound)))
        history.append(change)
        prev_change = change
        if change <= tol * max(1.0, float(np.max(np.abs(v)))):
            break
    slack = 1e-9 * max(1.0, A1)
    first = next((k for k in range(len(excess)) if max(excess[k:]) <= slack), None)
    return {"A1": A1, "m": m, "M": M, "iterations": len(history), "changes": history,
            "excess": excess, "first_within": first, "ok": excess[-1] <= slack and first is not None,
            "monotone_decrease": monotone, "t": t, "v": v, "bound": bound}


def invariance_defect(p: GronwallProblem, m: Optional[float] = None, t=None) -> float:
    """max |T_0 t^{-m} - t^{-m}| / t^{-m} over t, where T_0 is T with A = 0."""
    if m is None:
        m = lemma_a2_solve(p)["m"]
    if t is None:
        t = np.geomspace(p.t0, 1e4 * p.t0, 50)
    t = np.asarray(t, dtype=float)
    val = np.array([quad(lambda rho: float(p.h(rho)) * (rho * s) ** (-m), p.alpha, 1.0) for s in t])
    return float(np.max(np.abs(val - t ** (-m)) / t ** (-m)))


def fixed_point_defect(p: GronwallProblem) -> float:
    """|T A1 - A1| for the constant fixed point."""
    A1 = lemma_a2_solve(p)["A1"]
    op = _Operator(p)
    t = np.geomspace(p.t0, 1e4 * p.t0, 20)
    return float(np.max(np.abs(op(lambda s: np.full_like(s, A1), t) - A1)))


# ---- weighted logarithm ----------------------------------------------------------

WEIGHTS = {
    "zero": lambda x: np.zeros_like(np.asarray(x, dtype=float)),
    "exp": lambda x: np.exp(-np.asarray(x, dtype=float)),
    "min1x": lambda x: np.minimum(1.0, 1.0 / np.maximum(np.asarray(x, dtype=float), 1e-300)),
    "inv_square": lambda x: 1.0 / (1.0 + np.asarray(x, dtype=float)) ** 2,
}


def weight_function(spec) -> Callable:
    if callable(spec):
        return spec
    if spec not in WEIGHTS:
        raise ConfigurationError(f"unknown weight {spec!r}; choose from {sorted(WEIGHTS)}")
    return WEIGHTS[spec]


def ln_plus(x: float) -> float:
    return math.log(x) if x > 1.0 else 0.0


def weighted_log_integral(psi: Callable, a: float, b: float) -> float:
    """int_0^a psi(x) ln_+(b/(a - x)) dx with u = a - x = e^{-s} removing the endpoint singularity."""
    if a <= 0 or b <= 0:
        raise ConfigurationError("need a > 0 and b > 0")
    ell = min(a, b)
    s0 = -math.log(ell)
    lb = math.log(b)

    def f(s):
        u = math.exp(-s)
        return float(psi(a - u)) * (lb + s) * u

    val, err = integrate.quad(f, s0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=400)
    if not math.isfinite(val) or err > 1e-9 * max(1.0, abs(val)):
        raise NumericFailure(f"weighted log integral did not converge (a={a}, b={b}, err={err})")
    return val


def lemma_a1_check(psi_spec, grids: Sequence[Sequence], stability: float = 0.25) -> dict:
    """Smallest A_psi per (a, b) grid and the relative spread across grids."""
    psi = weight_function(psi_spec)
    fits = []
    for grid in grids:
        ratios = [weighted_log_integral(psi, a, b) / (1.0 + ln_plus(b / a)) for a, b in grid]
        fits.append(float(max(ratios)) if ratios else 0.0)
    top = max(fits) if fits else 0.0
    spread = (top - min(fits)) / top if top > 0 else 0.0
    return {"A_psi_empirical": top, "fits": fits, "spread": spread, "stable": spread <= stability,
            "violations": [] if spread <= stability else [{"fits": fits}]}


def interleaved_grids(lo: float = 1e-2, hi: float = 1e2, points: int = 9):
    """Two disjoint (a, b) grids: geometric nodes and their geometric midpoints."""
    g = np.geomspace(lo, hi, points)
    mid = np.sqrt(g[:-1] * g[1:])
    return [[(float(a), float(b)) for a in g for b in g], [(float(a), float(b)) for a in mid for b in mid]]
