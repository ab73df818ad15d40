"""Discrete Green-Poisson kernel G_n(t) = t^n e^{-t} / n! and its difference calculus.

G solves u_t + Delta u = 0 on the integer lattice, where
Delta u(x) = u(x) - u(x-1). Values are computed with the saddle-point
form G_n(t) = exp(-stirlerr(n) - bd0(n, t)) / sqrt(2 pi n), which keeps
relative accuracy near 1e-15 for large n where plain log-space
evaluation loses about log10(n) digits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .errors import ConfigurationError, InternalConsistencyError
from .flux import FluxFunction

IDENTITY_TOL = 1e-12
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def truncation_index(t: float) -> int:
    """Largest index kept in sums over n; the Poisson mass beyond is far below 1e-16."""
    return int(math.ceil(t + 40.0 * math.sqrt(t) + 50.0))


def ln_plus(x):
    """max(0, ln x), with ln_plus(0) = 0 and ln_plus(inf) = inf."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x > 1.0, np.log(np.maximum(x, 1.0)), 0.0)


# ---- kernel evaluation ------------------------------------------------------------

@njit(cache=True)
def _stirlerr(n):
    # log(n!) - log(sqrt(2 pi n) (n/e)^n)
    if n <= 15.0:
        return math.lgamma(n + 1.0) - (n + 0.5) * math.log(n) + n - 0.9189385332046727
    nn = n * n
    s0 = 1.0 / 12.0
    s1 = 1.0 / 360.0
    s2 = 1.0 / 1260.0
    s3 = 1.0 / 1680.0
    s4 = 1.0 / 1188.0
    if n > 500.0:
        return (s0 - s1 / nn) / n
    if n > 80.0:
        return (s0 - (s1 - s2 / nn) / nn) / n
    if n > 35.0:
        return (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / n
    return (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / n


@njit(cache=True)
def _bd0(x, m):
    # x log(x/m) + m - x without cancellation near x = m
    if abs(x - m) < 0.5 * (x + m):
        v = (x - m) / (x + m)
        s = (x - m) * v
        ej = 2.0 * x * v
        v = v * v
        for j in range(1, 1000):
            ej *= v
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
        return s
    return x * math.log(x / m) + m - x


@njit(cache=True)
def _g(n, t):
    if n < 0:
        return 0.0
    if t == 0.0:
        return 1.0 if n == 0 else 0.0
    if n == 0:
        return math.exp(-t)
    x = float(n)
    return math.exp(-_stirlerr(x) - _bd0(x, t)) / math.sqrt(2.0 * math.pi * x)


@njit(cache=True)
def _g_array(n, t, out):
    for i in range(n.size):
        out[i] = _g(n[i], t[i])


def kernel_G(n, t):
    """G_n(t) for integer n (zero when n < 0) and t >= 0; broadcasts over arrays."""
    n_arr, t_arr = np.broadcast_arrays(np.asarray(n, dtype=np.int64), np.asarray(t, dtype=float))
    if np.any(t_arr < 0) or not np.all(np.isfinite(t_arr)):
        raise ConfigurationError("kernel_G needs finite t >= 0")
    flat_n = np.ascontiguousarray(n_arr).ravel()
    flat_t = np.ascontiguousarray(t_arr).ravel()
    out = np.empty(flat_n.size)
    _g_array(flat_n, flat_t, out)
    if n_arr.ndim == 0:
        return float(out[0])
    return out.reshape(n_arr.shape)


def kernel_row(t: float, n_max: Optional[int] = None) -> np.ndarray:
    """G_0(t), ..., G_{n_max}(t)."""
    if n_max is None:
        n_max = truncation_index(t)
    return kernel_G(np.arange(n_max + 1), np.full(n_max + 1, float(t)))


def _check(direct, closed, scale, what):
    bad = np.abs(direct - closed) > IDENTITY_TOL * scale + 1e-300
    if np.any(bad):
        i = int(np.argmax(np.abs(direct - closed) / np.where(scale > 0, scale, 1.0)))
        raise InternalConsistencyError(
            f"{what}: direct {np.ravel(direct)[i]!r} vs closed form {np.ravel(closed)[i]!r}")


def kernel_dG(n, t, check: bool = True):
    """Delta G_n(t) = G_n - G_{n-1}, returned from the closed form G_n (t - n) / t.

    The direct difference is computed as well and must agree to 1e-12
    relative to max(|G_n|, |G_{n-1}|). At t = 0 (and t < 1e-8) only the
    direct difference is used.
    """
    n = np.asarray(n, dtype=np.int64)
    t = np.asarray(t, dtype=float)
    g0 = kernel_G(n, t)
    g1 = kernel_G(n - 1, t)
    direct = g0 - g1
    small = t < 1e-8
    with np.errstate(divide="ignore", invalid="ignore"):
        closed = np.where(small, direct, g0 * (t - n) / np.where(small, 1.0, t))
    if check:
        _check(direct, closed, np.maximum(np.abs(g0), np.abs(g1)), "first difference")
    return closed if closed.ndim else float(closed)


def kernel_d2G(n, t, check: bool = True):
    """Delta^2 G_n(t) = G_n - 2 G_{n-1} + G_{n-2} from G_n (1 - 2n/t + n(n-1)/t^2), cross-checked."""
    n = np.asarray(n, dtype=np.int64)
    t = np.asarray(t, dtype=float)
    g0 = kernel_G(n, t)
    g1 = kernel_G(n - 1, t)
    g2 = kernel_G(n - 2, t)
    direct = g0 - 2.0 * g1 + g2
    small = t < 1e-8
    ts = np.where(small, 1.0, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        closed = np.where(small, direct, g0 * (1.0 - 2.0 * n / ts + n * (n - 1.0) / ts ** 2))
    if check:
        scale = np.maximum(np.maximum(np.abs(g0), 2.0 * np.abs(g1)), np.abs(g2))
        _check(direct, closed, scale, "second difference")
    return closed if closed.ndim else float(closed)


def identity_mismatch(n, t) -> dict:
    """Largest relative gap between closed forms and direct differences for Delta G and Delta^2 G.

    Points whose kernel values are below 1e-290 carry no relative precision
    (subnormal range) and are counted in ``underflow`` instead.
    """
    n = np.asarray(n, dtype=np.int64)
    t = np.asarray(t, dtype=float)
    g0, g1, g2 = kernel_G(n, t), kernel_G(n - 1, t), kernel_G(n - 2, t)
    d1 = kernel_dG(n, t, check=False)
    d2 = kernel_d2G(n, t, check=False)
    s1 = np.maximum(np.abs(g0), np.abs(g1))
    s2 = np.maximum(np.maximum(np.abs(g0), 2.0 * np.abs(g1)), np.abs(g2))
    ok1 = (t >= 1e-8) & (s1 > 1e-290)
    ok2 = (t >= 1e-8) & (s2 > 1e-290)
    r1 = np.abs((g0 - g1) - d1)[ok1] / s1[ok1]
    r2 = np.abs((g0 - 2.0 * g1 + g2) - d2)[ok2] / s2[ok2]
    return {"first": float(r1.max(initial=0.0)), "second": float(r2.max(initial=0.0)),
            "underflow": int(np.count_nonzero((s1 > 0) & (s1 <= 1e-290)))}


def sign_pattern_violations(t: float, n_max: Optional[int] = None) -> list:
    """Integers n where the signs of Delta G and Delta^2 G deviate from the closed-form predictions."""
    if n_max is None:
        n_max = truncation_index(t)
    n = np.arange(-2, n_max + 1)
    tt = np.full(n.size, float(t))
    d1 = np.atleast_1d(kernel_dG(n, tt))
    d2 = np.atleast_1d(kernel_d2G(n, tt))
    g = np.atleast_1d(kernel_G(n, tt))
    live = g > 1e-280
    out = []
    for k, nk in enumerate(n):
        if not live[k] or nk < 0:
            continue
        if nk < t and not d1[k] > 0:
            out.append(("dG", int(nk)))
        if nk > t and not d1[k] < 0:
            out.append(("dG", int(nk)))
        r = math.sqrt(t + 0.25)
        inside = -r < nk - t - 0.5 < r
        if inside and not d2[k] < 0:
            out.append(("d2G", int(nk)))
        if not inside and not d2[k] >= 0:
            out.append(("d2G", int(nk)))
    return out


def normalization_defect(t: float) -> float:
    """|sum_n G_n(t) - 1| with the standard truncation."""
    return abs(math.fsum(kernel_row(t)) - 1.0)


def semigroup_defect(n: int, s: float, t: float) -> float:
    """|sum_k G_k(s) G_{n-k}(t) - G_n(s + t)|."""
    k = np.arange(n + 1)
    a = kernel_G(k, np.full(k.size, float(s)))
    b = kernel_G(n - k, np.full(k.size, float(t)))
    return abs(math.fsum(a * b) - kernel_G(n, s + t))


def abs_difference_sum(t: float) -> float:
    """sum_{n >= -1} |Delta G_n(t)| truncated at truncation_index(t)."""
    n = np.arange(-1, truncation_index(t) + 1)
    return math.fsum(np.abs(np.atleast_1d(kernel_dG(n, np.full(n.size, float(t))))))


def abs_second_difference_sum(t: float) -> float:
    n = np.arange(-2, truncation_index(t) + 2)
    return math.fsum(np.abs(np.atleast_1d(kernel_d2G(n, np.full(n.size, float(t))))))


# ---- bound checks ----------------------------------------------------------------

@dataclass
class KernelBoundReport:
    violations: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    telescoping_max: float = 0.0
    asymptotic_worst: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"violations": self.violations, "constants": self.constants,
                "telescoping_max": self.telescoping_max, "asymptotic_worst": self.asymptotic_worst,
                "details": self.details}


def _envelope_checks(n_max: int, t_values: np.ndarray, report: KernelBoundReport):
    n = np.arange(1, n_max + 1)
    worst = 0.0
    count = 0
    for t in t_values:
        g = np.atleast_1d(kernel_G(n, np.full(n.size, t)))
        lead = 1.0 / np.sqrt(2.0 * math.pi * n)
        p = n - t
        bound = np.where(p >= 0, lead * np.exp(-p * p / (2.0 * n)), lead * np.exp(-p * p / (2.0 * t)))
        ratio = g / bound
        worst = max(worst, float(ratio.max()))
        bad = ratio > 1.0 + 1e-13
        count += n.size
        for k in np.nonzero(bad)[0]:
            report.violations.append({"bound": "G-upper-p" if p[k] >= 0 else "G-upper-q",
                                      "n": int(n[k]), "t": float(t), "ratio": float(ratio[k])})
    report.details["gaussian_ratio_max"] = worst
    report.details["gaussian_points"] = count


def _gaussian_asymptotics(t_values: np.ndarray, a_values=(-2.0, -1.0, 0.0, 1.0, 2.0)) -> float:
    """max over grid of |G_n sqrt(2 pi t) e^{a^2/2} - 1| sqrt(t) / (1 + |a| + |a|^3) with n = round(t + a sqrt t)."""
    worst = 0.0
    for t in t_values:
        if t < 4:
            continue
        for a in a_values:
            n = int(round(t + a * math.sqrt(t)))
            aa = (n - t) / math.sqrt(t)
            val = kernel_G(n, t) * math.sqrt(2.0 * math.pi * t) * math.exp(aa * aa / 2.0)
            worst = max(worst, abs(val - 1.0) * math.sqrt(t) / (1.0 + abs(aa) + abs(aa) ** 3))
    return worst


def _ratios_ii_iii(s_values):
    """Ratios of the lower-tail and upper-tail difference bounds on every (n, s)."""
    r_ii, r_iii = [], []
    for s in s_values:
        top = truncation_index(s)
        n = np.arange(0, top + 1)
        d = np.atleast_1d(kernel_dG(n, np.full(n.size, float(s))))
        p = n - s
        up = p > 0
        lhs = -d[up]
        pp = p[up]
        with np.errstate(over="ignore", under="ignore"):
            rhs = np.where(pp < s, s ** -1.5 * pp * np.exp(-pp * pp / (4.0 * s)), pp ** -0.5 * np.exp(-pp / 4.0))
        keep = rhs > 1e-290
        r_ii.append(np.max(lhs[keep] / rhs[keep]) if np.any(keep) else 0.0)
        down = (p < 0) & (n >= 1)
        if np.any(down):
            q = -p[down]
            with np.errstate(under="ignore"):
                rhs3 = q / (s * np.sqrt(n[down])) * np.exp(-q * q / (2.0 * s))
            keep = rhs3 > 1e-290
            r_iii.append(np.max(d[down][keep] / rhs3[keep]) if np.any(keep) else 0.0)
    return max(r_ii), (max(r_iii) if r_iii else 0.0)


def weighted_difference_integral(xbar: float, t: float, tau: float, a1_tilde: float) -> float:
    """Sum over integer xi = x - k with xi_bar > a1_tilde of |Delta G_k(t - tau)| (1 + ln_+(1/(xi_bar - a1_tilde))) (1 + xi_bar).

    x = t + xbar sqrt(t) is rounded to the lattice.
    """
    x = round(t + xbar * math.sqrt(t))
    s = t - tau
    k = np.arange(0, truncation_index(s) + 1)
    xi = x - k
    xib = (xi - tau) / math.sqrt(tau)
    keep = xib > a1_tilde
    if not np.any(keep):
        return 0.0
    d = np.abs(np.atleast_1d(kernel_dG(k[keep], np.full(int(keep.sum()), s))))
    w = (1.0 + ln_plus(1.0 / (xib[keep] - a1_tilde))) * (1.0 + xib[keep])
    return math.fsum(d * w)


def _ratio_v(samples, alpha, a1_tilde):
    worst = 0.0
    for xbar, t, frac in samples:
        tau = t * (alpha + (1.0 - alpha) * frac)
        lhs = weighted_difference_integral(xbar, t, tau, a1_tilde)
        x = round(t + xbar * math.sqrt(t))
        xb = (x - t) / math.sqrt(t)
        if xb <= a1_tilde:
            continue
        rhs = (1.0 / math.sqrt(t - tau)) * (1.0 + math.sqrt((1.0 - alpha) / alpha)) \
            * (1.0 + float(ln_plus(1.0 / (xb - a1_tilde)))) * (1.0 + xb / math.sqrt(alpha))
        worst = max(worst, lhs / rhs)
    return worst


def check_kernel_bounds(n_max: int = 400, t_max: float = 400.0, samples: int = 400,
                        stability: float = 0.2, alpha: float = 0.5, a1_tilde: float = 1.0) -> KernelBoundReport:
    """Grid verification of the Gaussian envelopes and difference bounds for G.

    * G_n(t) <= e^{-p^2/(2n)} / sqrt(2 pi n) for p = n - t >= 0, and
      G_n(t) <= e^{-q^2/(2t)} / sqrt(2 pi n) for 0 < q = t - n <= t,
      on n in [1, n_max] and ``samples`` times in (0, t_max].
    * sum |Delta G_n(t)| equals 2 G_{floor t}(t) to 1e-12, and its
      normalized deviation from 2/sqrt(2 pi t) is at most 5/sqrt(t) for
      t in [25, t_max].
    * The tail bounds for -Delta G_{p+s}(s), Delta G_{s-q}(s) and the
      weighted sum are fitted with the smallest constant on two
      interleaved grids; the two fits must agree within ``stability``.
    """
    if n_max < 1 or t_max <= 0 or samples < 4:
        raise ConfigurationError("kernel grid must be positive with at least 4 samples")
    rep = KernelBoundReport()
    t_values = np.linspace(t_max / samples, t_max, samples)
    _envelope_checks(n_max, t_values, rep)
    rep.details["gaussian_asymptotic_constant"] = _gaussian_asymptotics(t_values[::8])

    tele = 0.0
    asym = 0.0
    for t in np.concatenate(([0.0], t_values)):
        lhs = abs_difference_sum(float(t))
        exact = 2.0 * kernel_G(int(math.floor(t)), float(t))
        err = abs(lhs - exact)
        tele = max(tele, err)
        if err > 1e-12:
            rep.violations.append({"bound": "telescoping", "t": float(t), "error": err})
        if 25.0 <= t:
            dev = abs(lhs * math.sqrt(2.0 * math.pi * t) / 2.0 - 1.0)
            asym = max(asym, dev * math.sqrt(t))
            if dev > 5.0 / math.sqrt(t):
                rep.violations.append({"bound": "telescoping-asymptotic", "t": float(t), "deviation": dev})
    rep.telescoping_max = tele
    rep.asymptotic_worst = asym
    t_mid = [25.0, 100.0, 400.0]
    rep.details["second_difference_scaled"] = {
        str(t): abs_second_difference_sum(t) * t * math.sqrt(2.0 * math.pi * math.e) / 4.0 for t in t_mid}

    s_all = np.geomspace(0.05, t_max, 2 * max(samples // 10, 8))
    ii_a, iii_a = _ratios_ii_iii(s_all[0::2])
    ii_b, iii_b = _ratios_ii_iii(s_all[1::2])
    xb = np.linspace(a1_tilde + 0.05, a1_tilde + 4.0, 6)
    ts = np.geomspace(50.0, t_max, 4)
    fr = np.linspace(0.0, 0.98, 6)
    grid_v = [(x, t, f) for x in xb for t in ts for f in fr]
    v_a = _ratio_v(grid_v[0::2], alpha, a1_tilde)
    v_b = _ratio_v(grid_v[1::2], alpha, a1_tilde)
    rep.constants = {"A1_lower_tail": max(ii_a, ii_b), "A1_upper_tail": max(iii_a, iii_b),
                     "A1_weighted_sum": max(v_a, v_b)}
    rep.details["fits"] = {"lower_tail": [ii_a, ii_b], "upper_tail": [iii_a, iii_b], "weighted_sum": [v_a, v_b]}
    for name, (a, b) in rep.details["fits"].items():
        if min(a, b) <= 0 or abs(a - b) > stability * max(a, b):
            rep.violations.append({"bound": f"{name}-stability", "fits": [a, b]})
    return rep


# ---- cutoff -----------------------------------------------------------------------

@dataclass(frozen=True)
class Cutoff:
    """Quintic smoothstep chi0 rising from 0 at a1 to 1 at a1_tilde.

    chi(x, t) = chi0((x - t) / sqrt t). A0 bounds |chi0'| delta and
    |chi0''| delta^2: the maxima are 15/8 and 10/sqrt(3).
    """

    a1: float
    a1_tilde: float
    A0: float = max(15.0 / 8.0, 10.0 / math.sqrt(3.0))

    @property
    def delta(self) -> float:
        return self.a1_tilde - self.a1

    def _r(self, xbar):
        return np.clip((np.asarray(xbar, dtype=float) - self.a1) / self.delta, 0.0, 1.0)

    def chi0(self, xbar):
        r = self._r(xbar)
        return r ** 3 * (10.0 - 15.0 * r + 6.0 * r * r)

    def dchi0(self, xbar):
        r = self._r(xbar)
        return 30.0 * r * r * (1.0 - r) ** 2 / self.delta

    def d2chi0(self, xbar):
        r = self._r(xbar)
        return 60.0 * r * (1.0 - r) * (1.0 - 2.0 * r) / self.delta ** 2

    def chi(self, x, t):
        return self.chi0((np.asarray(x, dtype=float) - t) / np.sqrt(t))

    def chi_t(self, x, t):
        """Partial time derivative of chi(x, t)."""
        x = np.asarray(x, dtype=float)
        xb = (x - t) / np.sqrt(t)
        return self.dchi0(xb) * (-1.0 / np.sqrt(t) - (x - t) / (2.0 * t ** 1.5))


def make_cutoff(a1: float, a1_tilde: float) -> Cutoff:
    if not 0.0 < a1 < a1_tilde:
        raise ConfigurationError("cutoff needs 0 < a1 < a1_tilde")
    return Cutoff(float(a1), float(a1_tilde))


def check_cutoff_bounds(c: Cutoff, t_values: Sequence[float], points: int = 4000) -> dict:
    """Measures the worst ratios of the three difference bounds for chi over lattice x near the ramp.

    Raises InternalConsistencyError if any ratio exceeds 1.
    """
    d, A0 = c.delta, c.A0
    worst = {"first": 0.0, "second": 0.0, "heat": 0.0}
    grid_dense = np.linspace(c.a1 - 1.0, c.a1_tilde + 1.0, points)
    shape_ok = (np.all(np.abs(c.dchi0(grid_dense)) <= A0 / d * (1 + 1e-12))
                and np.all(np.abs(c.d2chi0(grid_dense)) <= A0 / d ** 2 * (1 + 1e-12))
                and np.all((c.chi0(grid_dense) >= 0) & (c.chi0(grid_dense) <= 1)))
    if not shape_ok:
        raise InternalConsistencyError("smoothstep derivative bound failed on dense grid")
    for t in t_values:
        t = float(t)
        st = math.sqrt(t)
        lo = math.floor(t + (c.a1 - 1.0) * st) - 2
        hi = math.ceil(t + (c.a1_tilde + 1.0) * st) + 3
        x = np.arange(lo, hi + 1, dtype=float)
        ch = c.chi(x, t)
        d1 = ch - c.chi(x - 1, t)
        d2 = ch - 2.0 * c.chi(x - 1, t) + c.chi(x - 2, t)
        heat = c.chi_t(x, t) + d1
        worst["first"] = max(worst["first"], float(np.max(np.abs(d1))) / (A0 / (d * st)))
        worst["second"] = max(worst["second"], float(np.max(np.abs(d2))) / (A0 / (d * d * t)))
        worst["heat"] = max(worst["heat"], float(np.max(np.abs(heat))) / ((A0 / t) * (1.0 / d ** 2 + c.a1_tilde / (2.0 * d))))
    if max(worst.values()) > 1.0:
        raise InternalConsistencyError(f"cutoff difference bound violated: {worst}")
    return {"A0": A0, "delta": d, "worst_ratio": worst}


# ---- representation formulas ------------------------------------------------------

def homogeneous_residual(n: int, s: float, t: float) -> float:
    """Residual of reconstructing u(x, s+t) = G_{x-m}(s+t) from its slice at time s through the kernel.

    This equals the convolution defect of G.
    """
    return semigroup_defect(n, s, t)


@dataclass
class LatticeField:
    """u(n, tau_j) on equally spaced stored times, from lattice snapshots minus an offset."""

    times: np.ndarray
    states: list
    offset: float = 0.0

    @classmethod
    def from_states(cls, states, offset: float = 0.0) -> "LatticeField":
        times = np.array([s.t for s in states], dtype=float)
        if times.size < 3 or np.any(np.diff(times) <= 0):
            raise ConfigurationError("need at least three increasing stored times")
        steps = np.diff(times)
        if np.max(np.abs(steps - steps[0])) > 1e-9 * max(1.0, times[-1]):
            raise ConfigurationError("stored times must be equally spaced for Simpson quadrature")
        return cls(times, list(states), float(offset))

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def u(self, j: int, n) -> np.ndarray:
        return self.states[j].at(np.asarray(n)) - self.offset

    def lo(self, j: int) -> int:
        return self.states[j].n_lo


def simpson_weights(m: int, h: float) -> np.ndarray:
    """Composite Simpson weights for m + 1 equally spaced nodes (m even)."""
    if m < 2 or m % 2:
        raise ConfigurationError("Simpson quadrature needs an even number of intervals")
    w = np.ones(m + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


def representation_residual(field_: LatticeField, phi: Optional[FluxFunction], params: dict,
                            probe=(1.5, 2.5), equation_tol: float = 1e-6) -> dict:
    """Compares Delta u(x, t) with the sum of the five kernel integrals I0..I4.

    The frame uses unit speed: xbar = (x - t)/sqrt(t) and chi(x, t) =
    chi0(xbar). The field is u = F - offset where F solves the lattice
    equation with flux ``phi``; phi(offset) must be 1 so that u sees the
    flux phi(u + offset) = 1 + phi0(u). Pass None for the heat flow
    u_t + Delta u = 0. The last stored time is t and the first must be
    alpha t. Terms:

    * I2: the kernel applied to u chi at the initial time,
    * I0, I1: -phi0(u) Delta u chi split at xi_bar = a1_tilde (phi0 = phi - 1),
    * I3: u (chi_tau + Delta chi), I4: -Delta u Delta chi.

    I3 and I4 are summed over the whole support of Delta chi, which
    reaches 1/sqrt(tau) past a1_tilde.
    """
    alpha = float(params["alpha"])
    a1 = float(params["a1"])
    a1t = float(params["a1_tilde"])
    sigma = float(params.get("sigma", 1.0))
    sigma0 = float(params.get("sigma0", 0.0))
    if not (1.0 + sigma0) / (1.0 + sigma) < alpha < 1.0:
        raise ConfigurationError("alpha must lie in ((1 + sigma0)/(1 + sigma), 1)")
    cut = make_cutoff(a1, a1t)
    times = field_.times
    t = float(times[-1])
    if abs(times[0] - alpha * t) > 1e-9 * t:
        raise ConfigurationError("first stored time must equal alpha * t")
    m = times.size - 1
    w = simpson_weights(m, field_.dt)
    st = math.sqrt(t)
    x_probe = np.arange(math.ceil(t + probe[0] * st), math.floor(t + probe[1] * st) + 1)
    if x_probe.size == 0:
        raise ConfigurationError("probe band holds no lattice points")
    if x_probe[0] - 1 < t + a1t * st + 1:
        raise ConfigurationError("probe band must sit beyond the cutoff plateau")
    s_max = t - times[0]
    lo_needed = int(min(x_probe[0] - truncation_index(s_max) - 2,
                        math.floor(times[0] + a1 * math.sqrt(times[0])) - 2))
    for st_ in field_.states:
        if st_.n_lo > lo_needed and abs(st_.values[0] - st_.alpha) > 1e-12:
            raise ConfigurationError("stored window too narrow for the kernel support")
    n_lo = max(lo_needed, int(math.floor(times[0] + a1 * math.sqrt(times[0]))) - 3)
    n_hi = int(x_probe[-1])
    cells = np.arange(n_lo, n_hi + 1)

    # integrands on all stored times: J[j, cells]
    U = np.array([field_.u(j, cells) for j in range(times.size)])
    Um = np.array([field_.u(j, cells - 1) for j in range(times.size)])
    dU = U - Um
    if phi is not None:
        phi_hat0 = float(phi(field_.offset))
        if abs(phi_hat0 - 1.0) > 1e-9:
            raise ConfigurationError("flux seen by u must equal 1 at u = 0 in the unit-speed frame")
        ph = np.asarray(phi(U + field_.offset), dtype=float)
        _equation_check(field_, cells, ph, dU, equation_tol)
        phi0 = ph - 1.0
    else:
        phi0 = np.zeros_like(U)
    tau = times[:, None]
    chi = cut.chi(cells[None, :], tau)
    chim = cut.chi(cells[None, :] - 1.0, tau)
    dchi = chi - chim
    chit = cut.chi_t(cells[None, :], tau)
    xib = (cells[None, :] - tau) / np.sqrt(tau)
    plateau = xib > a1t
    j0 = -phi0 * dU * chi * plateau
    j1 = -phi0 * dU * chi * (~plateau)
    j3 = U * (chit + dchi)
    j4 = -dU * dchi
    initial = U[0] * chi[0]

    out_terms = np.zeros((x_probe.size, 5))
    direct = np.empty(x_probe.size)
    for i, x in enumerate(x_probe):
        k = x - cells
        ok = k >= 0
        dG0 = np.zeros(cells.size)
        dG0[ok] = kernel_dG(k[ok], np.full(int(ok.sum()), t - times[0]))
        out_terms[i, 2] = math.fsum(dG0 * initial)
        acc = np.zeros(4)
        for j in range(times.size):
            s = t - times[j]
            dG = np.zeros(cells.size)
            dG[ok] = kernel_dG(k[ok], np.full(int(ok.sum()), s), check=False)
            acc += w[j] * np.array([dG @ j0[j], dG @ j1[j], dG @ j3[j], dG @ j4[j]])
        out_terms[i, [0, 1, 3, 4]] = acc
        direct[i] = float(field_.u(m, [x])[0] - field_.u(m, [x - 1])[0])
    total = out_terms.sum(axis=1)
    resid = np.abs(total - direct)
    return {"residual_sup": float(resid.max()), "residuals": resid.tolist(), "x": x_probe.tolist(),
            "delta_u": direct.tolist(), "I_terms": {f"I{k}": float(np.max(np.abs(out_terms[:, k]))) for k in range(5)},
            "dt_store": field_.dt, "t": t, "t_start": float(times[0])}


def _equation_check(field_: LatticeField, cells, ph, dU, tol):
    # fourth-order central time derivative at interior stored times
    U = np.array([field_.u(j, cells) for j in range(field_.times.size)])
    h = field_.dt
    if U.shape[0] < 5:
        return
    ut = (U[:-4] - 8.0 * U[1:-3] + 8.0 * U[3:-1] - U[4:]) / (12.0 * h)
    res = ut + ph[2:-2] * dU[2:-2]
    worst = float(np.max(np.abs(res)))
    if worst > tol:
        raise ConfigurationError(f"stored field does not solve the lattice equation (residual {worst:.3e})")
