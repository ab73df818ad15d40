"""Explicit lower barriers for the lattice equation near a degenerate right state.

Everything assumes phi(1) = C with phi'(1) > 0 (right degenerate flux).

psi(z)     = (C/phi'(1)) e^{-z^2/2} / int_{-inf}^{z/2} e^{-2y^2} dy
psi_hat(x) = (C/phi'(1)) e^{-2x^2/C} / int_{-inf}^{x} e^{-2y^2/C} dy

Both are evaluated through erfcx, which gives full relative accuracy
including the far left where the Gaussian integral underflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, special

from .errors import ConfigurationError, NumericFailure
from .flux import DEGENERACY_TOL, LATTICE, FluxFunction, monotone_branches
from .lattice import LatticeState
from .wavetrain import eval_profile, solve_wavetrain_lattice

SQRT_PI_8 = math.sqrt(math.pi / 8.0)


def psi(z, C: float, phi_prime_1: float):
    """Burgers tail profile in the lattice normalization."""
    z = np.asarray(z, dtype=float)
    out = (C / phi_prime_1) / (SQRT_PI_8 * special.erfcx(-z / math.sqrt(2.0)))
    return out[()] if out.ndim == 0 else out


def dpsi(z, C: float, phi_prime_1: float):
    """d psi / dz = -z psi - psi^2 phi'(1) / (2C)."""
    p = psi(z, C, phi_prime_1)
    return -np.asarray(z) * p - p * p * phi_prime_1 / (2.0 * C)


def psi_hat(xbar, C: float, phi_prime_1: float):
    """Tail profile in the variable (x - Ct)/(2 sqrt t)."""
    xbar = np.asarray(xbar, dtype=float)
    out = (C / phi_prime_1) / (math.sqrt(C) * SQRT_PI_8 * special.erfcx(-xbar * math.sqrt(2.0 / C)))
    return out[()] if out.ndim == 0 else out


def dpsi_hat(xbar, C: float, phi_prime_1: float):
    """d psi_hat / d xbar = -(4/C) xbar psi_hat - (phi'(1)/C) psi_hat^2."""
    p = psi_hat(xbar, C, phi_prime_1)
    return -(4.0 / C) * np.asarray(xbar) * p - (phi_prime_1 / C) * p * p


def check_psi_monotone(C: float, phi_prime_1: float, grid=None, h: float = 1e-5) -> dict:
    """Strict negativity of d psi_hat / d xbar and agreement with a centered difference."""
    if grid is None:
        grid = np.linspace(-10.0, 10.0, 2001)
    x = np.asarray(grid, dtype=float)
    d = dpsi_hat(x, C, phi_prime_1)
    num = (psi_hat(x + h, C, phi_prime_1) - psi_hat(x - h, C, phi_prime_1)) / (2.0 * h)
    # relative scale guards the large values on the far left
    scale = np.maximum(1.0, np.abs(d))
    mismatch = float(np.max(np.abs(d - num) / scale))
    positive = x[d >= 0]
    return {"max_derivative": float(d.max()), "violations": positive.tolist(),
            "numeric_mismatch": mismatch, "ok": positive.size == 0 and mismatch <= 1e-8}


def _degenerate_right(phi: FluxFunction):
    C = phi.speed(LATTICE, (0.0, 1.0))
    if abs(phi.phi1 - C) > DEGENERACY_TOL or not phi.dphi1 > 0:
        raise ConfigurationError("barrier checks need phi(1) = C and phi'(1) > 0")
    return C, phi.dphi1


# ---- asymptotic sub-solution ------------------------------------------------------

@dataclass(frozen=True)
class ShiftSpec:
    """D(t) = coeff sqrt(C t) + offset; coeff = 0 gives a frozen shift."""

    coeff: float = 2.25
    offset: float = 0.0

    def value(self, t, C):
        return self.coeff * np.sqrt(C * t) + self.offset

    def rate(self, t, C):
        return 0.5 * self.coeff * math.sqrt(C) / np.sqrt(t)


def subsolution_residual(phi: FluxFunction, D: ShiftSpec, xbar, t: float, amplitude: float = 1.0) -> np.ndarray:
    """dF/dt - phi(F)(F(x-1) - F(x)) for F = 1 - amplitude psi((x - Ct - D)/sqrt(Ct))/sqrt t.

    Non-positive values mean F is a sub-solution at (x, t). ``amplitude``
    other than 1 gives a deliberately altered barrier.
    """
    C, d1 = _degenerate_right(phi)
    xbar = np.asarray(xbar, dtype=float)
    sct = math.sqrt(C * t)
    x = C * t + xbar * sct
    Dt = float(D.value(t, C))
    z = (x - C * t - Dt) / sct
    zm = z - 1.0 / sct
    p = amplitude * psi(z, C, d1)
    pm = amplitude * psi(zm, C, d1)
    dz_dt = (-C - D.rate(t, C)) / sct - z / (2.0 * t)
    Ft = p / (2.0 * t ** 1.5) - amplitude * dpsi(z, C, d1) * dz_dt / math.sqrt(t)
    F = 1.0 - p / math.sqrt(t)
    rhs = np.asarray(phi(F)) * (p - pm) / math.sqrt(t)
    return Ft - rhs


def check_asymptotic_subsolution(phi: FluxFunction, D: ShiftSpec, region: dict, t_grid: Sequence[float],
                                 points: int = 401, amplitude: float = 1.0) -> dict:
    """Residual sign of the Burgers barrier on B < xbar < A over t_grid.

    t0_empirical is the smallest grid time from which on every residual is
    <= 0 (None if the last time still fails). The scaled residual
    max residual * t^{3/2} is reported for every time.
    """
    B, A = float(region["B"]), float(region["A"])
    if not B < A:
        raise ConfigurationError("region needs B < A")
    ts = np.sort(np.asarray(t_grid, dtype=float))
    xb = np.linspace(B, A, points + 2)[1:-1]
    worst = np.array([float(np.max(subsolution_residual(phi, D, xb, t, amplitude))) for t in ts])
    ok = worst <= 0.0
    t0 = None
    for k in range(ts.size):
        if np.all(ok[k:]):
            t0 = float(ts[k])
            break
    scaled = worst * ts ** 1.5
    late = scaled[ts >= 2.0 * t0] if t0 is not None else np.array([])
    return {"t": ts.tolist(), "max_residual": worst.tolist(), "scaled": scaled.tolist(),
            "t0_empirical": t0, "late_scaled_max": float(late.max()) if late.size else None,
            "ok": t0 is not None and (late.size == 0 or float(late.max()) < 0.0)}


# ---- patching window --------------------------------------------------------------

def patch_root(eps: float) -> float:
    """Negative root x of e^{-2x^2} / int_{-inf}^x e^{-2y^2} dy = -4x/(1 - eps)."""
    if not 0.0 < eps < 1.0:
        raise ConfigurationError("eps must lie in (0, 1)")

    def g(x):
        return 1.0 / (SQRT_PI_8 * special.erfcx(-math.sqrt(2.0) * x)) + 4.0 * x / (1.0 - eps)

    hi = -1e-12
    lo = -1.0
    while g(lo) > 0:
        lo *= 2.0
        if lo < -1e6:
            raise NumericFailure("patching equation root not bracketed")
    if g(hi) <= 0:
        raise NumericFailure("patching equation root not bracketed")
    return optimize.brentq(g, lo, hi, xtol=1e-15, rtol=1e-15)


def upper_branch(phi: FluxFunction):
    """Monotone branch of phi that contains y = 1."""
    return monotone_branches(phi)[-1]


def phi_inverse_upper(phi: FluxFunction, v) -> np.ndarray:
    """Vectorized inverse of phi on its increasing branch ending at 1 (bisection to machine precision)."""
    lo_b, hi_b = upper_branch(phi)
    v = np.asarray(v, dtype=float)
    vmin, vmax = float(phi(lo_b)), float(phi(hi_b))
    if np.any(v < vmin - 1e-15) or np.any(v > vmax + 1e-15):
        raise ConfigurationError("value outside the range of the upper branch of phi")
    lo = np.full(v.shape, lo_b)
    hi = np.full(v.shape, hi_b)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        up = np.asarray(phi(mid)) < v
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    return 0.5 * (lo + hi)


def check_patching(phi: FluxFunction, Gamma_window: float, t_grid: Sequence[float], eps: float = 0.5,
                   points: int = 41) -> dict:
    """Margins of the diffusion barrier over the Burgers barrier on the patching window.

    With x* = patch_root(eps) and delta = -2 x*, the window is
    n in Ct + (2 - delta) sqrt(Ct) +- Gamma_window. margin = lhs - rhs, and
    -inf where the diffusion barrier is undefined (small t).
    """
    C, d1 = _degenerate_right(phi)
    x_star = patch_root(eps)
    delta = -2.0 * x_star
    ts = np.sort(np.asarray(t_grid, dtype=float))
    lo_b, hi_b = upper_branch(phi)
    vmin, vmax = float(phi(lo_b)), float(phi(hi_b))
    margins, centers = [], []
    for t in ts:
        sct = math.sqrt(C * t)
        center = C * t + (2.0 - delta) * sct
        n = center + np.linspace(-Gamma_window, Gamma_window, points)
        arg = (n - 2.0 * sct) / t
        rhs = 1.0 - psi((n - C * t - 2.0 * sct) / sct, C, d1) / math.sqrt(t)
        m = np.full(n.shape, -np.inf)
        ok = (arg >= vmin) & (arg <= vmax)
        if np.any(ok):
            m[ok] = phi_inverse_upper(phi, arg[ok]) - rhs[ok]
        margins.append(float(m.min()))
        centers.append(float(m[points // 2]))
    margins = np.array(margins)
    t0 = None
    for k in range(ts.size):
        if np.all(margins[k:] > 0):
            t0 = float(ts[k])
            break
    return {"x_star": x_star, "delta": delta, "t": ts.tolist(), "min_margin": margins.tolist(),
            "center_margin": centers, "t0_empirical": t0, "ok": t0 is not None}


# ---- patched barrier --------------------------------------------------------------

@lru_cache(maxsize=64)
def _sigma_profile(phi_key, sigma: float):
    phi = _PHI_REGISTRY[phi_key]
    return solve_wavetrain_lattice(phi, overfall=(-sigma, 1.0), max_span=400)


_PHI_REGISTRY: dict = {}


@dataclass
class PatchedSubsolution:
    """Four-piece lower barrier (wave train, diffusion, Burgers tail, constant)."""

    phi: FluxFunction
    C: float
    phi_prime_1: float
    l: float = 1.21
    a: float = 0.0
    delta: float = 0.5
    A: float = 6.0
    c1: float = 1.0
    psi_amplitude: float = 1.0
    junction_tol: float = 5e-3

    def sigma(self, t):
        return math.exp(-t ** (1.0 / 3.0))

    def gamma1(self, t):
        return self.c1 * t ** (1.0 / 3.0)

    def gamma2(self, t):
        return 2.0 * math.sqrt(self.C * self.l * t) + self.a

    def boundaries(self, t):
        C = self.C
        sct = math.sqrt(C * t)
        b1 = C * t + math.sqrt(C * self.l * t) + self.a
        b2 = C * t + self.gamma1(t) + self.gamma2(t) - self.delta * sct
        b3 = C * t + self.A * sct
        return b1, b2, b3

    def profile(self, t):
        key = id(self.phi)
        _PHI_REGISTRY[key] = self.phi
        sigma = float(f"{self.sigma(t):.12e}")
        return _sigma_profile(key, sigma)

    def pieces(self, n, t):
        """Value of each piece at n (NaN where a piece is undefined)."""
        n = np.asarray(n, dtype=float)
        C = self.C
        sct = math.sqrt(C * t)
        prof = self.profile(t)
        wave = np.asarray(eval_profile(prof, n - C * t - self.gamma1(t)), dtype=float)
        arg = (n - self.gamma1(t) - self.gamma2(t)) / t
        lo_b, hi_b = upper_branch(self.phi)
        vmin, vmax = float(self.phi(lo_b)), float(self.phi(hi_b))
        diff = np.full(n.shape, np.nan)
        okd = (arg >= vmin) & (arg <= vmax)
        if np.any(okd):
            diff[okd] = phi_inverse_upper(self.phi, arg[okd])
        tail = 1.0 - self.psi_amplitude * psi((n - C * t - self.gamma1(t) - self.gamma2(t)) / sct,
                                               C, self.phi_prime_1) / math.sqrt(t)
        const = np.full(n.shape, 1.0 - self.delta)
        return wave, diff, tail, const

    def __call__(self, n, t):
        n = np.asarray(n, dtype=float)
        b1, b2, b3 = self.boundaries(t)
        wave, diff, tail, const = self.pieces(n, t)
        out = np.where(n <= b1, wave, np.where(n < b2, diff, np.where(n < b3, tail, const)))
        if np.any(np.isnan(out)):
            raise ConfigurationError(f"diffusion piece undefined at t = {t}; t is below the barrier's range")
        return out

    def junctions(self, t) -> list:
        """Jumps F(first cell right of a boundary) - F(last cell left of it); negative means a drop."""
        out = []
        for k, b in enumerate(self.boundaries(t)):
            left = math.floor(b) if k == 0 else math.ceil(b) - 1
            vals = self(np.array([left, left + 1]), t)
            jump = float(vals[1] - vals[0])
            out.append({"boundary": float(b), "jump": jump, "upward": jump > 1e-8,
                        "large_drop": jump < -self.junction_tol})
        return out


def build_patched_subsolution(phi: FluxFunction, params: Optional[dict] = None) -> PatchedSubsolution:
    """Assemble the four-piece barrier; needs a negative extension of phi for the wave-train piece."""
    C, d1 = _degenerate_right(phi)
    if phi.extension_slope is None:
        raise ConfigurationError("the wave-train piece needs phi extended to negative values")
    p = dict(params or {})
    if "l" in p and not p["l"] > 1.0:
        raise ConfigurationError("l must exceed 1")
    if "delta" in p and not 0.0 < p["delta"] < 1.0:
        raise ConfigurationError("delta must lie in (0, 1)")
    if "A" in p and not p["A"] > 2.0 * math.sqrt(C):
        raise ConfigurationError("A must exceed 2 sqrt(C)")
    allowed = {"l", "a", "delta", "A", "c1", "psi_amplitude", "junction_tol"}
    extra = set(p) - allowed
    if extra:
        raise ConfigurationError(f"unknown barrier parameters {sorted(extra)}")
    return PatchedSubsolution(phi, C, d1, **p)


def _comparison_margin(state: LatticeState, sub: PatchedSubsolution, T: float) -> tuple:
    t = state.t + T
    b3 = sub.boundaries(t)[2]
    hi = max(state.n_hi, math.ceil(b3) + 2)
    n = np.arange(state.n_lo, hi + 1)
    m = state.at(n) - sub(n, t)
    k = int(np.argmin(m))
    return float(m[k]), int(n[k])


def calibrate_T(state: LatticeState, sub: PatchedSubsolution, T_max: float = 1e4, min_time: float = 0.0) -> float:
    """Smallest T (to 1e-3 relative) on a doubling bracket with F(n, t) > F-(n, t + T) at the state's time."""
    lo = max(0.0, min_time - state.t)
    if _comparison_margin(state, sub, lo)[0] > 0:
        return lo
    hi = max(lo, 1.0)
    while _comparison_margin(state, sub, hi)[0] <= 0:
        lo = hi
        hi *= 2.0
        if hi > T_max:
            raise ConfigurationError("no time shift puts the barrier below the data")
    while hi - lo > 1e-3 * hi:
        mid = 0.5 * (lo + hi)
        if _comparison_margin(state, sub, mid)[0] > 0:
            hi = mid
        else:
            lo = mid
    return hi


def comparison_check(states: Sequence[LatticeState], sub: PatchedSubsolution, T: Optional[float] = None,
                     delta0: float = 0.25, min_time: float = 100.0) -> dict:
    """Ordering F(n, t) > F-(n, t + T) on every sampled state, and the Burgers-tail lower bound.

    T is calibrated on the first state unless given; ``min_time`` keeps
    t + T in the range where the diffusion piece is defined. The lower
    bound F(n, t) > 1 - psi((n - Cs - (2 + delta) sqrt(Cs))/sqrt(Cs))/sqrt(s)
    with s = t + T is tested on Cs + (2 + delta - delta0) sqrt(Cs) < n < Cs + A sqrt(Cs).
    """
    if not 0.0 < delta0 < sub.delta:
        raise ConfigurationError("need 0 < delta0 < delta")
    states = list(states)
    if T is None:
        T = calibrate_T(states[0], sub, min_time=min_time)
    C, d1 = sub.C, sub.phi_prime_1
    rows, violations, tail_violations = [], [], []
    for s in states:
        m, n_at = _comparison_margin(s, sub, T)
        t = s.t + T
        sct = math.sqrt(C * t)
        lo = C * t + (2.0 + sub.delta - delta0) * sct
        hi = C * t + sub.A * sct
        n = np.arange(math.floor(lo) + 1, math.ceil(hi))
        n = n[(n > lo) & (n < hi)]
        bound = 1.0 - sub.psi_amplitude * psi((n - C * t - (2.0 + sub.delta) * sct) / sct, C, d1) / math.sqrt(t)
        tm = s.at(n) - bound
        tail_min = float(tm.min()) if tm.size else math.inf
        jumps = sub.junctions(t)
        rows.append({"t": float(s.t), "margin": m, "argmin_n": n_at, "tail_margin": tail_min,
                     "junctions": jumps})
        if not m > 0:
            violations.append({"t": float(s.t), "n": n_at, "margin": m})
        if tm.size and not tail_min > 0:
            k = int(np.argmin(tm))
            tail_violations.append({"t": float(s.t), "n": int(n[k]), "margin": tail_min})
    return {"T": float(T), "rows": rows, "violations": violations, "tail_violations": tail_violations,
            "ok": not violations and not tail_violations}


def negative_control(states: Sequence[LatticeState], sub: PatchedSubsolution, T: Optional[float] = None,
                     factor: float = 0.5, delta0: float = 0.25) -> dict:
    """Same comparison with the Burgers-tail amplitude scaled by ``factor``; violations are expected."""
    tampered = replace(sub, psi_amplitude=sub.psi_amplitude * factor)
    return comparison_check(states, tampered, T=T, delta0=delta0)
