"""Flux functions phi on [0, 1] and everything derived pointwise from them.

A flux is stored as closed-form polynomial pieces in the variable s = 1 - y,
so that endpoint derivatives at y = 1 are read off the coefficients. An
optional linear continuation to y < 0 is used by wave trains whose left
level is negative.
"""

from __future__ import annotations

import functools
import json
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import Chebyshev, Polynomial
from scipy import integrate, optimize

from .errors import ConfigurationError, DomainError, NumericFailure

CONTINUOUS = "continuous"
LATTICE = "lattice"
MODELS = (CONTINUOUS, LATTICE)

NON_DEGENERATE = "NonDegenerate"
RIGHT_DEGENERATE = "RightDegenerate"
LEFT_DEGENERATE = "LeftDegenerate"
BOTH_DEGENERATE = "BothDegenerate"

DEGENERACY_TOL = 1e-9
# Relative slack below which a shock-profile margin counts as zero.
MARGIN_TOL = 1e-12


def check_model(model: str) -> str:
    model = str(model).lower()
    if model not in MODELS:
        raise ConfigurationError(f"unknown model {model!r}; expected one of {MODELS}")
    return model


def quad(f, a, b, epsabs=1e-13, points=None):
    """Adaptive Gauss-Kronrod quadrature that raises instead of warning."""
    if a == b:
        return 0.0
    pts = None
    if points is not None:
        lo, hi = min(a, b), max(a, b)
        pts = [p for p in points if lo < p < hi] or None
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(f, a, b, epsabs=epsabs, epsrel=1e-13, limit=400, points=pts)
        except integrate.IntegrationWarning as exc:
            raise NumericFailure(f"quadrature did not converge on [{a}, {b}]: {exc}") from exc
    return float(val)


@dataclass(frozen=True)
class Piece:
    """Polynomial piece phi(y) = sum_k coeffs[k] * (1 - y)**k on [lo, hi]."""

    lo: float
    hi: float
    coeffs: tuple

    @property
    def poly(self) -> Polynomial:
        return Polynomial(self.coeffs)


@dataclass(frozen=True)
class DegeneracyCase:
    kind: str
    gamma0: float
    Gamma0: float


@dataclass(frozen=True)
class ShockProfileCheck:
    holds: bool
    worst_margin: float
    worst_u: float


class FluxFunction:
    """Positive piecewise-polynomial flux on [0, 1].

    Parameters
    ----------
    pieces : sequence of Piece
        Must cover [0, 1] in order with matching values at the junctions.
    label : str
        Identifier used in reports and file names.
    extension_slope : float, optional
        If given, phi(y) = phi(0) - K*y for y < 0 with K = extension_slope > 0.
    """

    def __init__(self, pieces: Sequence[Piece], label: str = "custom",
                 extension_slope: Optional[float] = None):
        pieces = [Piece(float(p.lo), float(p.hi), tuple(float(c) for c in p.coeffs)) for p in pieces]
        if not pieces:
            raise ConfigurationError("flux needs at least one piece")
        if abs(pieces[0].lo) > 1e-14 or abs(pieces[-1].hi - 1.0) > 1e-14:
            raise ConfigurationError("pieces must cover [0, 1]")
        for left, right in zip(pieces, pieces[1:]):
            if abs(left.hi - right.lo) > 1e-14:
                raise ConfigurationError(f"gap or overlap between pieces at {left.hi} / {right.lo}")
            jump = left.poly(1.0 - left.hi) - right.poly(1.0 - right.lo)
            if abs(jump) > 1e-12:
                raise ConfigurationError(f"flux is discontinuous at y={left.hi} (jump {jump:.3e})")
        for p in pieces:
            if not p.hi > p.lo:
                raise ConfigurationError("empty piece")
        self.pieces = tuple(pieces)
        self.label = label
        self._breaks = np.array([p.lo for p in pieces[1:]])
        self._val = [p.poly for p in pieces]
        self._d1 = [-p.poly.deriv() for p in pieces]
        self._d2 = [p.poly.deriv(2) for p in pieces]
        # y-antiderivative of phi on each piece: d/dy[-P_int(1-y)] = P(1-y)
        self._anti = [-p.poly.integ() for p in pieces]

        if extension_slope is not None:
            extension_slope = float(extension_slope)
            if not extension_slope > 0:
                raise ConfigurationError("negative extension must be strictly decreasing (slope > 0)")
        self.extension_slope = extension_slope

        grid = np.linspace(0.0, 1.0, 20001)
        vals = self(grid)
        if not np.all(vals > 0):
            raise ConfigurationError(f"flux {label!r} is not positive on [0, 1] (min {vals.min():.3e})")
        self.max_value = float(vals.max())
        self.min_value = float(vals.min())

        self._build_phi_table()

    # ---- pointwise evaluation ----------------------------------------------------
    def _select(self, y):
        return np.searchsorted(self._breaks, y, side="right")

    def _eval(self, polys, y):
        y = np.asarray(y, dtype=float)
        idx = self._select(y)
        out = np.empty_like(y)
        for k, poly in enumerate(polys):
            m = idx == k
            if np.any(m):
                out[m] = poly(1.0 - y[m])
        return out

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = self._eval(self._val, y)
        if self.extension_slope is not None:
            neg = y < 0
            if np.any(neg):
                out = np.where(neg, self.phi0 - self.extension_slope * y, out)
        return out[()] if out.ndim == 0 else out

    def deriv(self, y):
        """phi'(y)."""
        y = np.asarray(y, dtype=float)
        out = self._eval(self._d1, y)
        if self.extension_slope is not None:
            out = np.where(y < 0, -self.extension_slope, out)
        return out[()] if out.ndim == 0 else out

    def deriv2(self, y):
        """phi''(y)."""
        y = np.asarray(y, dtype=float)
        out = self._eval(self._d2, y)
        if self.extension_slope is not None:
            out = np.where(y < 0, 0.0, out)
        return out[()] if out.ndim == 0 else out

    @property
    def phi0(self) -> float:
        return float(self._val[0](1.0))

    @property
    def phi1(self) -> float:
        return float(self._val[-1](0.0))

    @property
    def dphi0(self) -> float:
        return float(self._d1[0](1.0))

    @property
    def dphi1(self) -> float:
        return float(self._d1[-1](0.0))

    # ---- integrals ---------------------------------------------------------------
    def antiderivative(self, y):
        """Psi(y) = int_0^y phi, exact on each polynomial piece."""
        y = np.asarray(y, dtype=float)
        offsets = [0.0]
        for p, a in zip(self.pieces, self._anti):
            offsets.append(offsets[-1] + float(a(1.0 - p.hi) - a(1.0 - p.lo)))
        idx = self._select(y)
        out = np.empty_like(y)
        for k, (p, a) in enumerate(zip(self.pieces, self._anti)):
            m = idx == k
            if np.any(m):
                out[m] = offsets[k] + a(1.0 - y[m]) - a(1.0 - p.lo)
        if self.extension_slope is not None:
            neg = y < 0
            if np.any(neg):
                K = self.extension_slope
                out = np.where(neg, self.phi0 * y - 0.5 * K * y * y, out)
        return out[()] if out.ndim == 0 else out

    def _build_phi_table(self):
        # Chebyshev interpolant of 1/phi on each piece, integrated termwise.
        self._cheb = []
        for p in self.pieces:
            g = lambda y, p=p: 1.0 / p.poly(1.0 - y)
            for deg in (32, 64, 128, 256, 512):
                ch = Chebyshev.interpolate(g, deg, domain=[p.lo, p.hi])
                tail = np.max(np.abs(ch.coef[-4:]))
                if tail < 1e-17 * np.max(np.abs(ch.coef)):
                    break
            self._cheb.append(ch.integ(lbnd=p.hi))
        upper = [0.0]
        for p, ch in reversed(list(zip(self.pieces, self._cheb))):
            upper.append(upper[-1] - float(ch(p.lo)))
        # _upper[k] = int_{hi_k}^1 dy/phi
        self._upper = list(reversed(upper[:-1]))

    def Phi(self, F):
        """Potential Phi(F) = int_F^1 dy/phi(y), vectorized."""
        F = np.asarray(F, dtype=float)
        idx = self._select(F)
        out = np.empty_like(F)
        for k, ch in enumerate(self._cheb):
            m = idx == k
            if np.any(m):
                out[m] = self._upper[k] - ch(F[m])
        if self.extension_slope is not None:
            neg = F < 0
            if np.any(neg):
                K = self.extension_slope
                Phi0 = self._upper[0] - float(self._cheb[0](0.0))
                ext = Phi0 + np.log((self.phi0 - K * np.minimum(F, 0.0)) / self.phi0) / K
                out = np.where(neg, ext, out)
        return out[()] if out.ndim == 0 else out

    def speed(self, model: str, overfall=(0.0, 1.0)) -> float:
        """Wave-train speed for the overfall (alpha, beta) from exact antiderivatives."""
        model = check_model(model)
        a, b = map(float, overfall)
        if not b > a:
            raise ConfigurationError("overfall requires alpha < beta")
        if model == CONTINUOUS:
            return float((self.antiderivative(b) - self.antiderivative(a)) / (b - a))
        return float((b - a) / (self.Phi(a) - self.Phi(b)))

    # ---- construction helpers ----------------------------------------------------
    def with_negative_extension(self, slope: Optional[float] = None) -> "FluxFunction":
        if slope is None:
            slope = max(1.0, abs(self.dphi0) + 1.0)
        return FluxFunction(self.pieces, self.label, extension_slope=slope)

    def packed(self):
        """Flat arrays for compiled kernels: breaks, coefficient matrix, extension."""
        width = max(len(p.coeffs) for p in self.pieces)
        coefs = np.zeros((len(self.pieces), width))
        for k, p in enumerate(self.pieces):
            coefs[k, : len(p.coeffs)] = p.coeffs
        ext = -1.0 if self.extension_slope is None else self.extension_slope
        return np.ascontiguousarray(self._breaks), coefs, float(ext), self.phi0

    def packed_antiderivative(self):
        """Layout of Psi for compiled kernels: Psi(y) = aoff[k] + A_k(1 - y)."""
        width = max(len(a.coef) for a in self._anti)
        acoefs = np.zeros((len(self.pieces), width))
        aoff = np.zeros(len(self.pieces))
        for k, (p, a) in enumerate(zip(self.pieces, self._anti)):
            acoefs[k, : len(a.coef)] = a.coef
            aoff[k] = float(self.antiderivative(p.lo)) - float(a(1.0 - p.lo))
        return np.ascontiguousarray(self._breaks), acoefs, aoff

    def to_dict(self) -> dict:
        d = {"label": self.label,
             "pieces": [{"lo": p.lo, "hi": p.hi, "coeffs": list(p.coeffs)} for p in self.pieces]}
        if self.extension_slope is not None:
            d["negative_extension"] = {"slope": self.extension_slope}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FluxFunction":
        try:
            pieces = [Piece(p["lo"], p["hi"], tuple(p["coeffs"])) for p in d["pieces"]]
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed flux document: {exc}") from exc
        flux = cls(pieces, d.get("label", "custom"))
        ext = d.get("negative_extension")
        if ext == "default" or ext is True:
            flux = flux.with_negative_extension()
        elif isinstance(ext, dict):
            flux = flux.with_negative_extension(ext.get("slope"))
        return flux

    def __repr__(self):
        return f"FluxFunction({self.label!r}, pieces={len(self.pieces)})"


def polynomial_flux(coeffs, label="custom", extension_slope=None) -> FluxFunction:
    """Single-piece flux phi(y) = sum_k coeffs[k] (1-y)^k."""
    return FluxFunction([Piece(0.0, 1.0, tuple(coeffs))], label, extension_slope)


# ---- operations -------------------------------------------------------------------

def wave_speed(model: str, phi: FluxFunction) -> float:
    """Speed C by adaptive quadrature: mean of phi, or harmonic mean for the lattice."""
    model = check_model(model)
    pts = [p.lo for p in phi.pieces[1:]]
    if model == CONTINUOUS:
        return quad(lambda y: float(phi(y)), 0.0, 1.0, 1e-12, pts)
    return 1.0 / quad(lambda y: 1.0 / float(phi(y)), 0.0, 1.0, 1e-12, pts)


def potential_Phi(phi: FluxFunction, F: float) -> float:
    """Phi(F) = int_F^1 dy/phi(y) by adaptive quadrature."""
    F = float(F)
    if not 0.0 <= F <= 1.0:
        raise DomainError(f"F={F} outside [0, 1]")
    pts = [p.lo for p in phi.pieces[1:]]
    return quad(lambda y: 1.0 / float(phi(y)), F, 1.0, 1e-13, pts)


def check_shock_profile(model: str, phi: FluxFunction, grid_size: int = 1000,
                        overfall=(0.0, 1.0)) -> ShockProfileCheck:
    """Evaluate the strict average inequality on a uniform interior grid.

    The margin is ``mean(phi) - C`` (continuous) or ``1/C - mean(1/phi)``
    (lattice) over [alpha, u]; it must be positive at every grid point.
    """
    model = check_model(model)
    if grid_size < 100:
        raise ConfigurationError("grid_size must be at least 100")
    a, b = map(float, overfall)
    C = phi.speed(model, (a, b))
    u = a + (b - a) * np.arange(1, grid_size) / grid_size
    if model == CONTINUOUS:
        margin = (phi.antiderivative(u) - phi.antiderivative(a)) / (u - a) - C
        scale = abs(C)
    else:
        margin = 1.0 / C - (phi.Phi(a) - phi.Phi(u)) / (u - a)
        scale = 1.0 / C
    k = int(np.argmin(margin))
    worst = float(margin[k])
    holds = bool(worst > MARGIN_TOL * scale)
    if abs(worst) <= MARGIN_TOL * scale:
        worst = 0.0
    return ShockProfileCheck(holds, worst, float(u[k]))


def monotone_branches(phi: FluxFunction, n: int = 20001):
    """Maximal sub-intervals of [0, 1] on which phi is strictly monotone."""
    y = np.linspace(0.0, 1.0, n)
    sgn = np.sign(phi.deriv(y))
    cuts = [0.0]
    for k in range(1, n):
        if sgn[k] != sgn[k - 1] and sgn[k] != 0 and sgn[k - 1] != 0:
            root = optimize.brentq(lambda x: float(phi.deriv(x)), y[k - 1], y[k], xtol=1e-15)
            cuts.append(root)
        elif sgn[k] == 0 and 0 < k < n - 1:
            cuts.append(y[k])
    cuts.append(1.0)
    return [(lo, hi) for lo, hi in zip(cuts, cuts[1:]) if hi > lo]


def phi_inverse(phi: FluxFunction, v: float, branch=None) -> float:
    """Solve phi(y) = v on a monotone branch by bracketed root finding.

    Without ``branch`` the preimage must be unique across the monotone branches.
    """
    v = float(v)
    if branch is not None:
        lo, hi = map(float, branch)
        y = np.linspace(lo, hi, 4001)
        d = phi.deriv(y[1:-1])
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ConfigurationError(f"phi is not strictly monotone on [{lo}, {hi}]")
        branches = [(lo, hi)]
    else:
        branches = monotone_branches(phi)
    hits = []
    for lo, hi in branches:
        flo, fhi = float(phi(lo)) - v, float(phi(hi)) - v
        if flo == 0.0:
            hits.append(lo)
        elif fhi == 0.0:
            hits.append(hi)
        elif flo * fhi < 0:
            hits.append(optimize.brentq(lambda y: float(phi(y)) - v, lo, hi, xtol=1e-15, rtol=1e-15))
    hits = sorted(set(hits))
    if not hits:
        raise DomainError(f"v={v} is outside the range of phi on the branch")
    if len(hits) > 1 and max(hits) - min(hits) > 1e-12:
        raise ConfigurationError(f"v={v} has several preimages {hits}; pass a monotone branch")
    return float(hits[0])


def classify_degeneracy(model: str, phi: FluxFunction, tol: float = DEGENERACY_TOL) -> DegeneracyCase:
    """Degeneracy kind and the logarithmic shift coefficients for overfall (0, 1)."""
    model = check_model(model)
    C = phi.speed(model)
    left = abs(phi.phi0 - C) <= tol
    right = abs(phi.phi1 - C) <= tol
    d0, d1 = phi.dphi0, phi.dphi1
    if left and d0 == 0.0:
        raise ConfigurationError("degenerate left endpoint requires phi'(0) != 0")
    if right and d1 == 0.0:
        raise ConfigurationError("degenerate right endpoint requires phi'(1) != 0")
    if not check_shock_profile(model, phi).holds:
        raise ConfigurationError(f"shock-profile condition fails for {phi.label!r}")
    g = 0.0
    if right:
        g += 1.0 / d1
    if left:
        g -= 1.0 / d0
    if left and right:
        kind = BOTH_DEGENERATE
    elif right:
        kind = RIGHT_DEGENERATE
    elif left:
        kind = LEFT_DEGENERATE
    else:
        kind = NON_DEGENERATE
    return DegeneracyCase(kind, g, 0.5 * C * g)


# ---- shipped fluxes ------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def degenerate_quadratic_c() -> float:
    """Curvature c with int_0^1 ds / (1 - s/2 + c s^2) = 1."""
    def excess(c):
        return quad(lambda s: 1.0 / (1.0 - 0.5 * s + c * s * s), 0.0, 1.0, 1e-14) - 1.0
    return float(optimize.brentq(excess, 0.1, 5.0, xtol=1e-15, rtol=1e-15))


def degenerate_quadratic() -> FluxFunction:
    """phi(y) = 1 - (1-y)/2 + c (1-y)^2 with lattice speed equal to phi(1) = 1."""
    return polynomial_flux((1.0, -0.5, degenerate_quadratic_c()), "degenerate_quadratic")


SHIPPED = {
    "linear_2my": lambda: polynomial_flux((1.0, 1.0), "linear_2my"),
    "unit": lambda: polynomial_flux((1.0,), "unit"),
    "degenerate_quadratic": degenerate_quadratic,
    "linear_1py": lambda: polynomial_flux((2.0, -1.0), "linear_1py"),
}


def shipped_flux(label: str) -> FluxFunction:
    try:
        return SHIPPED[label]()
    except KeyError:
        raise ConfigurationError(f"unknown flux label {label!r}; shipped: {sorted(SHIPPED)}") from None


def load_flux(spec) -> FluxFunction:
    """Flux from a shipped label, a JSON file path, or an already-parsed document."""
    if isinstance(spec, FluxFunction):
        return spec
    if isinstance(spec, dict):
        return FluxFunction.from_dict(spec)
    spec = str(spec)
    if spec in SHIPPED:
        return shipped_flux(spec)
    try:
        with open(spec) as fh:
            return FluxFunction.from_dict(json.load(fh))
    except FileNotFoundError:
        raise ConfigurationError(f"unknown flux {spec!r}: not a shipped label or a file") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"flux file {spec!r} is not valid JSON: {exc}") from exc
