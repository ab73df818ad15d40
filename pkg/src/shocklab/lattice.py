"""Time integration of dF(n)/dt = phi(F(n)) (F(n-1) - F(n)) on a moving window."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import ConfigurationError, NumericFailure
from .flux import FluxFunction, LATTICE
from .wavetrain import WaveTrainProfile, eval_profile

MARGIN = 1e-10
EXTEND_BLOCK = 64
DROP_GUARD = 128
DROP_LEVEL = 1e-14
MAX_WINDOW = 2_000_000


@dataclass
class LatticeState:
    """F(n, t) for n = n_lo, ..., n_lo + len(values) - 1; alpha left and beta right of the window."""

    t: float
    n_lo: int
    values: np.ndarray
    alpha: float = 0.0
    beta: float = 1.0
    min_increment: float = math.inf
    min_value: float = math.inf
    max_value: float = -math.inf
    data_range: Optional[tuple] = None

    @property
    def n_hi(self) -> int:
        return self.n_lo + self.values.size - 1

    @property
    def n(self) -> np.ndarray:
        return np.arange(self.n_lo, self.n_hi + 1)

    def copy(self) -> "LatticeState":
        return LatticeState(self.t, self.n_lo, self.values.copy(), self.alpha, self.beta,
                            self.min_increment, self.min_value, self.max_value, self.data_range)

    def at(self, n):
        """F at arbitrary integers, using the fills outside the window."""
        n = np.asarray(n)
        idx = n - self.n_lo
        out = np.where(idx < 0, self.alpha, self.beta).astype(float)
        ok = (idx >= 0) & (idx < self.values.size)
        out[ok] = self.values[idx[ok]]
        return out

    def increments(self) -> np.ndarray:
        """Delta F(n) = F(n) - F(n-1) over the window (first entry uses the alpha fill)."""
        return np.diff(self.values, prepend=self.alpha)

    def record_invariants(self):
        d = self.increments()
        self.min_increment = min(self.min_increment, float(d.min()))
        self.min_value = min(self.min_value, float(self.values.min()))
        self.max_value = max(self.max_value, float(self.values.max()))

    @property
    def monotone_ok(self) -> bool:
        return self.min_increment >= -1e-12

    @property
    def bounds(self) -> tuple:
        """[alpha, beta], or the initial range for equal fills (small-data runs around a constant)."""
        if self.data_range is not None:
            return self.data_range
        return self.alpha, self.beta

    @property
    def bounded_ok(self) -> bool:
        lo, hi = self.bounds
        return self.min_value >= lo - 1e-12 and self.max_value <= hi + 1e-12


@dataclass
class InitialData:
    """Cauchy data: kind is "step", "wavetrain" (F(n) = profile(n + d)) or "custom".

    For "custom", ``table`` holds F(n_lo), F(n_lo + 1), ... starting at ``n_lo``.
    """

    kind: str = "step"
    alpha: float = 0.0
    beta: float = 1.0
    d: float = 0.0
    profile: Optional[WaveTrainProfile] = None
    table: Optional[Sequence[float]] = None
    n_lo: int = 0
    monotone: bool = False


def init_lattice(data: InitialData, window_hint=(-64, 64)) -> LatticeState:
    """Materialize initial data on a window wide enough for the margin invariants."""
    a, b = float(data.alpha), float(data.beta)
    lo, hi = map(int, window_hint)
    if hi <= lo:
        raise ConfigurationError("window_hint must satisfy lo < hi")
    if data.kind == "step":
        n = np.arange(lo, hi + 1)
        values = np.where(n <= 0, a, b).astype(float)
        state = LatticeState(0.0, lo, values, a, b)
    elif data.kind == "wavetrain":
        p = data.profile
        if p is None:
            raise ConfigurationError("wavetrain initial data needs a profile")
        a, b = p.alpha, p.beta
        while float(eval_profile(p, lo + data.d)) - a >= MARGIN * (b - a) and hi - lo < MAX_WINDOW:
            lo -= EXTEND_BLOCK
        while b - float(eval_profile(p, hi + data.d)) >= MARGIN * (b - a) and hi - lo < MAX_WINDOW:
            hi += EXTEND_BLOCK
        n = np.arange(lo, hi + 1)
        state = LatticeState(0.0, lo, np.asarray(eval_profile(p, n + data.d), dtype=float), a, b)
    elif data.kind == "custom":
        if data.table is None:
            raise ConfigurationError("custom initial data needs a table")
        values = np.asarray(data.table, dtype=float)
        if values.size < 2 or not np.all(np.isfinite(values)):
            raise ConfigurationError("custom table must hold at least two finite values")
        if b < a:
            raise ConfigurationError("need alpha <= beta")
        if a < b and (values.min() < a - 1e-12 or values.max() > b + 1e-12):
            raise ConfigurationError("custom data leaves [alpha, beta]")
        if data.monotone and np.any(np.diff(values) < -1e-12):
            raise ConfigurationError("custom data is not monotone although monotone data was demanded")
        if abs(values[0] - a) > 1e-8 or abs(b - values[-1]) > 1e-8:
            raise ConfigurationError("custom data does not reach alpha and beta at the window ends")
        state = LatticeState(0.0, int(data.n_lo), values.copy(), a, b)
        if a == b:
            state.data_range = (min(a, float(values.min())), max(a, float(values.max())))
    else:
        raise ConfigurationError(f"unknown initial data kind {data.kind!r}")
    state.record_invariants()
    return state


def _maintain_window(state: LatticeState):
    a, b = state.alpha, state.beta
    scale = b - a if b > a else 1.0
    v = state.values
    grew = False
    # one block per call: algebraic tails never meet the margin and must not run away
    if abs(b - v[-1]) > 0.1 * MARGIN * scale:
        v = np.concatenate([v, np.full(EXTEND_BLOCK, b)])
        grew = True
    if abs(v[0] - a) > 0.1 * MARGIN * scale:
        v = np.concatenate([np.full(EXTEND_BLOCK, a), v])
        state.n_lo -= EXTEND_BLOCK
        grew = True
    above = np.nonzero(np.abs(v - a) >= DROP_LEVEL * scale)[0]
    first = int(above[0]) if above.size else v.size
    if first > DROP_GUARD + EXTEND_BLOCK:
        cut = first - DROP_GUARD
        v = v[cut:]
        state.n_lo += cut
        grew = True
    if grew:
        state.values = np.ascontiguousarray(v)
    if state.values.size > MAX_WINDOW:
        raise NumericFailure("window exceeded the size limit", snapshot=state.copy())


def time_step(phi: FluxFunction, dt_max: float) -> float:
    return min(float(dt_max), 0.2 / phi.max_value)


def advance(state: LatticeState, phi: FluxFunction, t_target: float, dt_max: float = 0.1,
            chunk_time: float = 16.0) -> LatticeState:
    """Integrate in place to exactly t_target with fixed steps, shortening the last one."""
    dt = time_step(phi, dt_max)
    packed = phi.packed()
    chunk = max(1, int(chunk_time / (dt * phi.max_value)))
    while state.t < t_target:
        remaining = t_target - state.t
        full = int(math.floor(remaining / dt))
        if full >= chunk:
            nsteps, last, t_new = chunk, 0.0, state.t + chunk * dt
        else:
            last = remaining - full * dt
            if last <= 1e-13 * max(1.0, t_target):
                last = 0.0
            nsteps, t_new = full, t_target
        if nsteps == 0 and last == 0.0:
            state.t = t_target
            break
        ok = _kernels.lattice_rk4(state.values, state.alpha, dt, nsteps, last, *packed)
        if not ok:
            raise NumericFailure(f"non-finite value near t={state.t}", snapshot=state.copy())
        state.t = t_new
        _maintain_window(state)
        state.record_invariants()
    return state


def step_lattice(state: LatticeState, phi: FluxFunction, dt_max: float = 0.1) -> LatticeState:
    """One RK4 step of size min(dt_max, 0.2/max phi), then window maintenance."""
    dt = time_step(phi, dt_max)
    if not dt > 0:
        raise NumericFailure("step size underflow", snapshot=state.copy())
    ok = _kernels.lattice_rk4(state.values, state.alpha, dt, 1, 0.0, *phi.packed())
    if not ok:
        raise NumericFailure(f"non-finite value near t={state.t}", snapshot=state.copy())
    state.t += dt
    _maintain_window(state)
    state.record_invariants()
    return state


# ---- observers ------------------------------------------------------------------------

@dataclass
class Observer:
    """Calls ``fn(state)`` at each of ``times`` and keeps (t, result) pairs."""

    times: Sequence[float]
    fn: Callable[[LatticeState], object]
    name: str = "observer"
    records: List = field(default_factory=list)

    def __call__(self, state):
        self.records.append((state.t, self.fn(state)))


def snapshot_observer(times, name="snapshots") -> Observer:
    return Observer(list(times), lambda s: s.copy(), name)


def sup_distance_observer(times, profile, shift_fn, name="sup_distance") -> Observer:
    """shift_fn(t) gives the shift s in F~(n - C t + s)."""
    return Observer(list(times), lambda s: sup_distance_to_profile(s, profile, shift_fn(s.t)), name)


@dataclass
class RunRecord:
    final: LatticeState
    observers: List[Observer]
    metadata: dict

    def observer(self, name) -> Observer:
        for ob in self.observers:
            if ob.name == name:
                return ob
        raise KeyError(name)

    def snapshots(self, name="snapshots") -> List[LatticeState]:
        return [s for _, s in self.observer(name).records]


def run_lattice(data, phi: FluxFunction, t0: float, t_end: float, observers=(), dt_max: float = 0.1,
                window_hint=(-64, 64)) -> RunRecord:
    """Integrate from t0 to t_end, visiting every observer at its times.

    ``data`` may be InitialData or an existing LatticeState (used as the state at t0).
    """
    if t_end < t0:
        raise ConfigurationError("t_end must not precede t0")
    if isinstance(data, LatticeState):
        state = data.copy()
    else:
        state = init_lattice(data, window_hint)
    state.t = float(t0)
    times = sorted({float(t) for ob in observers for t in ob.times if t0 <= t <= t_end})
    history = [(state.t, state.n_lo, state.n_hi)]
    for t in times:
        advance(state, phi, t, dt_max)
        history.append((state.t, state.n_lo, state.n_hi))
        for ob in observers:
            if any(abs(t - s) == 0.0 for s in ob.times):
                ob(state)
    if t_end > state.t:
        advance(state, phi, t_end, dt_max)
        history.append((state.t, state.n_lo, state.n_hi))
    meta = {"flux": phi.label, "C": phi.speed(LATTICE, (state.alpha, state.beta)) if state.beta > state.alpha else None,
            "dt": time_step(phi, dt_max), "t0": float(t0), "t_end": float(t_end),
            "window_history": history, "monotone_ok": state.monotone_ok, "bounded_ok": state.bounded_ok,
            "min_increment": state.min_increment}
    return RunRecord(state, list(observers), meta)


# ---- diagnostics ----------------------------------------------------------------------

def sup_distance_to_profile(state: LatticeState, profile: WaveTrainProfile, shift: float) -> float:
    """sup over the window of |F(n, t) - F~(n - C t + shift)|."""
    xi = state.n - profile.C * state.t + shift
    return float(np.max(np.abs(state.values - eval_profile(profile, xi))))


def outside_window_slack(state: LatticeState, profile: WaveTrainProfile, shift: float) -> float:
    """Bound on the distance contributed by cells outside the window."""
    left = abs(state.values[0] - state.alpha) + abs(float(eval_profile(profile, state.n_lo - 1 - profile.C * state.t + shift)) - state.alpha)
    right = abs(state.beta - state.values[-1]) + abs(state.beta - float(eval_profile(profile, state.n_hi + 1 - profile.C * state.t + shift)))
    return float(max(left, right))


def write_snapshots_csv(path, states: Sequence[LatticeState]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "n", "F"])
        for s in states:
            for n, v in zip(s.n, s.values):
                w.writerow([repr(float(s.t)), int(n), repr(float(v))])


def write_metadata(path, meta: dict):
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=float)


def read_snapshots_csv(path, alpha=0.0, beta=1.0) -> List[LatticeState]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    out = []
    for t in np.unique(data[:, 0]):
        rows = data[data[:, 0] == t]
        order = np.argsort(rows[:, 1])
        n = rows[order, 1].astype(int)
        out.append(LatticeState(float(t), int(n[0]), rows[order, 2].copy(), alpha, beta))
    return out


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
