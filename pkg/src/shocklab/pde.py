"""Method-of-lines integrator for f_t + phi(f) f_x = eps f_xx.

Space: backward upwind differences of Psi(f) = int phi (conservative form
of phi(f) f_x, valid since phi > 0) and central second differences.
Time: classical RK4. Dirichlet fills alpha on the left and beta on the
right; the grid grows whenever the solution departs from a fill near
an edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import optimize

from . import _kernels
from .errors import ConfigurationError, NumericFailure
from .flux import FluxFunction
from .wavetrain import WaveTrainProfile, eval_profile

CFL_SAFETY = 0.9
MARGIN = 1e-10
EXTEND_CELLS = 200
MAX_CELLS = 4_000_000


@dataclass
class GridState:
    """f(x_lo + i dx, t) with fills alpha (left) and beta (right)."""

    t: float
    x_lo: float
    dx: float
    values: np.ndarray
    alpha: float = 0.0
    beta: float = 1.0
    epsilon: float = 1.0
    min_value: float = math.inf
    max_value: float = -math.inf

    @property
    def x(self) -> np.ndarray:
        return self.x_lo + self.dx * np.arange(self.values.size)

    def copy(self) -> "GridState":
        return GridState(self.t, self.x_lo, self.dx, self.values.copy(), self.alpha, self.beta,
                         self.epsilon, self.min_value, self.max_value)

    def record_invariants(self):
        self.min_value = min(self.min_value, float(self.values.min()))
        self.max_value = max(self.max_value, float(self.values.max()))

    @property
    def bounded_ok(self) -> bool:
        lo, hi = min(self.alpha, self.beta), max(self.alpha, self.beta)
        return self.min_value >= lo - 1e-10 and self.max_value <= hi + 1e-10


def init_grid(kind: str, x_range, dx: float, epsilon: float = 1.0, alpha: float = 0.0, beta: float = 1.0,
              profile: Optional[WaveTrainProfile] = None, d: float = 0.0,
              fn: Optional[Callable] = None) -> GridState:
    """Initial grid for kind "step" (jump at x = 0), "wavetrain" (profile(x + d)) or "custom" (fn(x))."""
    if dx <= 0 or epsilon <= 0:
        raise ConfigurationError("dx and epsilon must be positive")
    x_lo, x_hi = map(float, x_range)
    if x_hi <= x_lo:
        raise ConfigurationError("empty spatial range")
    x = x_lo + dx * np.arange(int(round((x_hi - x_lo) / dx)) + 1)
    if kind == "step":
        v = np.where(x <= 0.0, alpha, beta).astype(float)
    elif kind == "wavetrain":
        if profile is None:
            raise ConfigurationError("wavetrain data needs a profile")
        alpha, beta = profile.alpha, profile.beta
        v = np.asarray(eval_profile(profile, x + d), dtype=float)
    elif kind == "custom":
        if fn is None:
            raise ConfigurationError("custom data needs a function")
        v = np.asarray(fn(x), dtype=float)
    else:
        raise ConfigurationError(f"unknown initial data kind {kind!r}")
    if not np.all(np.isfinite(v)):
        raise ConfigurationError("initial data is not finite")
    state = GridState(0.0, x_lo, float(dx), v, float(alpha), float(beta), float(epsilon))
    state.record_invariants()
    return state


def cfl_limit(dx: float, epsilon: float, phi: FluxFunction) -> float:
    return CFL_SAFETY * min(dx * dx / (2.0 * epsilon), dx / phi.max_value)


def _maintain(state: GridState):
    scale = max(abs(state.beta - state.alpha), abs(state.values).max(), 1e-300)
    if abs(state.values[-1] - state.beta) > MARGIN * scale or abs(state.values[-2] - state.beta) > MARGIN * scale:
        state.values = np.concatenate([state.values, np.full(EXTEND_CELLS, state.beta)])
    if abs(state.values[0] - state.alpha) > MARGIN * scale or abs(state.values[1] - state.alpha) > MARGIN * scale:
        state.values = np.concatenate([np.full(EXTEND_CELLS, state.alpha), state.values])
        state.x_lo -= EXTEND_CELLS * state.dx
    if state.values.size > MAX_CELLS:
        raise NumericFailure("grid exceeded its size limit", snapshot=state.copy())


def _integrate(state: GridState, phi: FluxFunction, dt: float, nsteps: int, last_dt: float):
    breaks, acoefs, aoff = phi.packed_antiderivative()
    ok = _kernels.pde_rk4(state.values, state.alpha, state.beta, state.dx, state.epsilon, dt, nsteps, last_dt,
                          breaks, acoefs, aoff)
    if not ok:
        raise NumericFailure(f"non-finite value near t = {state.t}", snapshot=state.copy())
    state.t += nsteps * dt + max(last_dt, 0.0)


def step_pde(state: GridState, phi: FluxFunction, dt_max: float) -> GridState:
    """One RK4 step of size dt_max, which must respect the CFL limit."""
    limit = cfl_limit(state.dx, state.epsilon, phi)
    if not 0.0 < dt_max <= limit:
        raise ConfigurationError(f"dt = {dt_max} violates the CFL limit {limit:.6g}")
    out = state.copy()
    _integrate(out, phi, dt_max, 1, 0.0)
    out.record_invariants()
    _maintain(out)
    return out


def advance(state: GridState, phi: FluxFunction, t_target: float, dt: Optional[float] = None,
            chunk_time: float = 1.0):
    """Advance in place to exactly t_target."""
    limit = cfl_limit(state.dx, state.epsilon, phi)
    if dt is None:
        dt = limit
    if not 0.0 < dt <= limit:
        raise ConfigurationError(f"dt = {dt} violates the CFL limit {limit:.6g}")
    while state.t < t_target:
        span = min(chunk_time, t_target - state.t)
        nsteps = int(math.floor(span / dt * (1 + 1e-12)))
        rest = span - nsteps * dt
        if rest < 1e-12 * max(1.0, t_target):
            rest = 0.0
        target = state.t + span
        _integrate(state, phi, dt, nsteps, rest)
        state.t = target
        state.record_invariants()
        _maintain(state)
    return state


@dataclass
class PdeRunRecord:
    final: GridState
    snapshots: List[GridState]
    metadata: dict = field(default_factory=dict)


def run_pde(state: GridState, phi: FluxFunction, t_end: float, snapshot_times: Sequence[float] = (),
            dt: Optional[float] = None) -> PdeRunRecord:
    st = state.copy()
    snaps = []
    for t in sorted(float(s) for s in snapshot_times):
        if t < st.t:
            continue
        advance(st, phi, t, dt)
        snaps.append(st.copy())
    advance(st, phi, t_end, dt)
    meta = {"flux": phi.label, "dx": st.dx, "epsilon": st.epsilon,
            "dt": dt if dt is not None else cfl_limit(st.dx, st.epsilon, phi),
            "bounded_ok": st.bounded_ok, "min_value": st.min_value, "max_value": st.max_value}
    return PdeRunRecord(st, snaps, meta)


def sup_distance_to_profile(state: GridState, profile: WaveTrainProfile, shift: float) -> float:
    """sup_x |f(x, t) - f~(x - C t + shift)| over the grid."""
    ref = eval_profile(profile, state.x - profile.C * state.t + shift)
    return float(np.max(np.abs(state.values - ref)))


def best_shift_distance(state: GridState, profile: WaveTrainProfile, guess: float = 0.0,
                        width: float = 1.0) -> tuple:
    """(shift, distance) minimizing the sup distance over shifts within guess +- width."""
    res = optimize.minimize_scalar(lambda s: sup_distance_to_profile(state, profile, s),
                                   bounds=(guess - width, guess + width), method="bounded",
                                   options={"xatol": 1e-10})
    return float(res.x), float(res.fun)


def gradient_estimate_check(snapshots: Sequence[GridState], gamma: float, region, t_min: float,
                            C: float) -> dict:
    """Normalized gradient sup_{a1 < xbar < a2} |f_x| C t / gamma over snapshots at t >= t_min.

    xbar = (x - C t)/sqrt(C t). The amplitude hypothesis |f| <= gamma/sqrt(C t)
    is checked first on each region; if it fails anywhere the check aborts
    and lists the offending points.
    """
    a1, a2 = map(float, region)
    if gamma <= 0 or C <= 0 or a2 <= a1:
        raise ConfigurationError("need gamma > 0, C > 0 and a1 < a2")
    times, sups, offending = [], [], []
    for s in snapshots:
        if s.t < t_min:
            continue
        x = s.x
        xb = (x - C * s.t) / math.sqrt(C * s.t)
        mask = (xb > a1) & (xb < a2)
        mask[0] = mask[-1] = False
        if not np.any(mask):
            raise ConfigurationError(f"region holds no grid points at t = {s.t}")
        amp = np.abs(s.values[mask]) * math.sqrt(C * s.t)
        bad = amp > gamma
        for xi in x[mask][bad][:20]:
            offending.append((float(xi), float(s.t)))
        fx = (s.values[2:] - s.values[:-2]) / (2.0 * s.dx)
        sups.append(float(np.max(np.abs(fx[mask[1:-1]]))) * C * s.t / gamma)
        times.append(float(s.t))
    if not times:
        raise ConfigurationError("no snapshots at or after t_min")
    if offending:
        return {"aborted": True, "violations": offending, "sup_ratio": None, "trend": None}
    t = np.array(times)
    v = np.array(sups)
    slope = float(np.polyfit(np.log(t), np.log(np.maximum(v, 1e-300)), 1)[0]) if v.max() > 0 and t.size > 1 else 0.0
    return {"aborted": False, "violations": [], "sup_ratio": float(v.max()),
            "trend": {"t": times, "ratio": sups, "slope": slope}}
