"""Canned pipelines for the acceptance criteria AC-1 ... AC-12.

Each pipeline returns an :class:`Outcome` holding named measurements with
their thresholds and the series written as CSV. CSV files carry only
deterministic numbers (``repr`` of floats); wall-clock times are printed
but never written.
"""

from __future__ import annotations

import csv
import filecmp
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy import optimize

from . import asymptotics, green, inequalities, lattice, pde, subsolution, wavetrain
from .errors import ConfigurationError
from .flux import LATTICE, classify_degeneracy, degenerate_quadratic, shipped_flux

_OPS = {
    "<=": lambda a, b: a <= b,
    "<": lambda a, b: a < b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    relation: str = "<="

    @property
    def passed(self) -> bool:
        v = self.value
        return v is not None and math.isfinite(v) and _OPS[self.relation](v, self.threshold)

    def line(self) -> str:
        flag = "ok " if self.passed else "BAD"
        return f"  [{flag}] {self.name} = {self.value:.6g} (need {self.relation} {self.threshold:.6g})"


@dataclass
class Outcome:
    criterion: str
    checks: List[Check] = field(default_factory=list)
    tables: Dict[str, tuple] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)
    runtime: float = 0.0

    def add(self, name, value, threshold, relation="<="):
        self.checks.append(Check(name, float(value), float(threshold), relation))

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def summary(self) -> str:
        return f"{self.criterion} {'PASS' if self.passed else 'FAIL'} ({self.runtime:.1f} s)"

    def report(self) -> str:
        lines = [self.summary()] + [c.line() for c in self.checks] + [f"  note: {n}" for n in self.notes]
        return "\n".join(lines)

    def write(self, out_dir: str) -> List[str]:
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        for name, (header, rows) in sorted(self.tables.items()):
            path = os.path.join(out_dir, f"{self.criterion}_{name}.csv")
            write_table(path, header, rows)
            paths.append(path)
        return paths


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


# ---- pipelines ---------------------------------------------------------------------

def ac1() -> Outcome:
    out = Outcome("AC-1")
    phi = shipped_flux("linear_2my")
    p = wavetrain.solve_wavetrain_continuous(phi, epsilon=1.0)
    exact = 1.0 / (1.0 + np.exp(-p.xi / 2.0))
    err = np.abs(p.values - exact)
    out.add("max logistic error", err.max(), 1e-6)
    out.tables["profile"] = (["xi", "F", "logistic"], list(zip(p.xi[::16], p.values[::16], exact[::16])))
    return out


def ac2() -> Outcome:
    out = Outcome("AC-2")
    for label in ("linear_2my", "degenerate_quadratic"):
        phi = shipped_flux(label)
        p = wavetrain.solve_wavetrain_lattice(phi)
        r = wavetrain.lattice_residual(p, phi)
        out.add(f"max lattice residual ({label})", r.max(), 1e-7)
        m = int(round(1.0 / p.h))
        xi = p.xi[3:-3][np.arange(3, p.values.size - 3) >= m]
        out.tables[f"residual_{label}"] = (["xi", "residual"], list(zip(xi[::16], r[::16])))
    return out


def ac3() -> Outcome:
    out = Outcome("AC-3")
    rng = np.random.default_rng(0)
    n = rng.integers(-2, 2001, 10_000)
    t = rng.uniform(0.0, 2000.0, 10_000)
    mm = green.identity_mismatch(n, t)
    out.add("closed form vs direct, first difference (relative)", mm["first"], 1e-12)
    out.add("closed form vs direct, second difference (relative)", mm["second"], 1e-12)
    out.notes.append(f"{mm['underflow']} of 10000 samples lie in the subnormal range and are excluded")
    ts = np.linspace(0.0, 500.0, 501)
    norm = [green.normalization_defect(float(s)) for s in ts]
    out.add("max |sum G_n(t) - 1| on [0, 500]", max(norm), 1e-12)
    triples = [(int(rng.integers(0, 400)), float(rng.uniform(0, 200)), float(rng.uniform(0, 200))) for _ in range(50)]
    semi = [green.semigroup_defect(*tr) for tr in triples]
    out.add("max semigroup defect", max(semi), 1e-12)
    out.tables["normalization"] = (["t", "defect"], list(zip(ts, norm)))
    out.tables["semigroup"] = (["n", "s", "t", "defect"], [(*tr, d) for tr, d in zip(triples, semi)])
    return out


def ac4() -> Outcome:
    out = Outcome("AC-4")
    rep = green.check_kernel_bounds(n_max=400, t_max=400.0)
    env = [v for v in rep.violations if v["bound"].startswith("G-upper")]
    asym = [v for v in rep.violations if v["bound"] == "telescoping-asymptotic"]
    out.add("Gaussian envelope violations", len(env), 0)
    out.add("telescoping identity error", rep.telescoping_max, 1e-12)
    out.add("max sqrt(t) |sum|dG| sqrt(2 pi t)/2 - 1| on [25, 400]", rep.asymptotic_worst, 5.0)
    out.add("asymptotic telescoping violations", len(asym), 0)
    out.add("all bound violations", len(rep.violations), 0)
    rows = [(k, v) for k, v in sorted(rep.constants.items())]
    rows += [(f"second_difference_scaled_{k}", v) for k, v in sorted(rep.details["second_difference_scaled"].items())]
    out.tables["constants"] = (["name", "value"], rows)
    return out


def ac5() -> Outcome:
    out = Outcome("AC-5")
    triples = [(10, 3.0, 4.0), (200, 80.0, 90.0), (50, 0.5, 40.0), (0, 1.0, 2.0), (120, 60.0, 60.0)]
    hom = [green.homogeneous_residual(*tr) for tr in triples]
    out.add("homogeneous reconstruction defect", max(hom), 1e-12)
    phi = degenerate_quadratic()
    times = np.round(np.linspace(180.0, 200.0, 201), 10)
    rec = lattice.run_lattice(lattice.InitialData("step"), phi, 0.0, 200.0, [lattice.snapshot_observer(times)],
                              dt_max=0.05)
    fld = green.LatticeField.from_states(rec.snapshots(), offset=1.0)
    r = green.representation_residual(fld, lambda u: phi(u),
                                      {"alpha": 0.9, "a1": 0.5, "a1_tilde": 1.0, "sigma": 1.0, "sigma0": 0.0})
    out.add("representation residual", r["residual_sup"], 1e-4)
    out.notes.append(f"Simpson quadrature step {fld.dt!r} over [{times[0]}, {times[-1]}]")
    out.tables["representation"] = (["x", "delta_u", "residual"], list(zip(r["x"], r["delta_u"], r["residuals"])))
    out.tables["homogeneous"] = (["n", "s", "t", "defect"], [(*tr, d) for tr, d in zip(triples, hom)])
    return out


def ac6() -> Outcome:
    out = Outcome("AC-6")
    phi = shipped_flux("linear_2my")
    L = wavetrain.solve_wavetrain_lattice(phi)
    d = 3.0
    st = lattice.init_lattice(lattice.InitialData("wavetrain", profile=L, d=d))
    lattice.advance(st, phi, 10.0)
    lat = lattice.sup_distance_to_profile(st, L, d)
    out.add("lattice sup distance at t = 10", lat, 1e-5)
    prof = wavetrain.solve_wavetrain_continuous(phi)
    g = pde.init_grid("wavetrain", (-40.0, 40.0), 0.05, 1.0, profile=prof)
    run = pde.run_pde(g, phi, 10.0)
    fixed = pde.sup_distance_to_profile(run.final, prof, 0.0)
    shift, best = pde.best_shift_distance(run.final, prof)
    out.add("PDE sup distance at t = 10, dx = 0.05", fixed, 5e-3)
    out.notes.append(f"PDE distance after re-fitting the shift: {best:.6g} at shift {shift:.6g}")
    ref = wavetrain.eval_profile(prof, run.final.x - prof.C * run.final.t)
    out.tables["pde"] = (["x", "f", "profile"], list(zip(run.final.x[::10], run.final.values[::10], ref[::10])))
    ref_l = wavetrain.eval_profile(L, st.n - L.C * st.t + d)
    out.tables["lattice"] = (["n", "F", "profile"], list(zip(st.n, st.values, ref_l)))
    return out


def ac7() -> Outcome:
    out = Outcome("AC-7")
    times = np.geomspace(1e2, 1e4, 161)
    for label in ("degenerate_quadratic", "linear_2my"):
        phi = shipped_flux(label)
        L = wavetrain.solve_wavetrain_lattice(phi)
        C = L.C
        rec = lattice.run_lattice(lattice.InitialData("step"), phi, 0.0, 1e4, [lattice.snapshot_observer(times)])
        tr = asymptotics.shift_trace(rec.snapshots(), L, phi, 4.0 * math.sqrt(C))
        fit = asymptotics.fit_log_shift(tr, window=(1e3, 1e4))
        case = classify_degeneracy(LATTICE, phi)
        if label == "degenerate_quadratic":
            out.add("fitted slope / Gamma0 - 1 (degenerate)", abs(fit["gamma_hat"] / case.Gamma0 - 1.0), 0.15)
            out.notes.append(f"gamma_hat = {fit['gamma_hat']:.6g}, Gamma0 = {case.Gamma0:.6g}")
        else:
            out.add("|fitted slope| (non-degenerate)", abs(fit["gamma_hat"]), asymptotics.noise_floor(phi, C))
        out.tables[f"trace_{label}"] = (["t", "d_A", "t_dA_prime"],
                                        list(zip(tr.times, tr.d_values, tr.times * tr.d_prime)))
    return out


def ac8() -> Outcome:
    out = Outcome("AC-8")
    phi = shipped_flux("degenerate_quadratic")
    L = wavetrain.solve_wavetrain_lattice(phi)
    G0 = classify_degeneracy(LATTICE, phi).Gamma0
    times = [50.0, 100.0, 200.0, 400.0, 800.0]
    rec = lattice.run_lattice(lattice.InitialData("step"), phi, 0.0, 800.0, [lattice.snapshot_observer(times)])
    S = rec.snapshots()
    late = S[-1]
    guess = asymptotics.compute_dA(late, L, phi, 4.0 * math.sqrt(L.C)) - G0 * math.log(late.t)
    res = optimize.minimize_scalar(lambda D: lattice.sup_distance_to_profile(late, L, G0 * math.log(late.t) + D),
                                   bracket=(guess - 1.0, guess + 1.0), tol=1e-10)
    D0 = float(res.x)
    dist = [lattice.sup_distance_to_profile(s, L, G0 * math.log(s.t) + D0) for s in S]
    out.add("sup distance ratio t=800 / t=50", dist[-1] / dist[0], 0.25)
    out.notes.append(f"D0 = {D0:.6g} fitted at t = 800")
    out.tables["distance"] = (["t", "sup_distance"], list(zip(times, dist)))
    return out


def _hump_run(label, height, width, times):
    phi = shipped_flux(label)
    table = np.zeros(width + 2)
    table[1:1 + width] = height
    data = lattice.InitialData("custom", alpha=0.0, beta=0.0, table=table, n_lo=-1)
    rec = lattice.run_lattice(data, phi, 0.0, float(times[-1]), [lattice.snapshot_observer(times)])
    return phi, rec.snapshots()


def ac9() -> Outcome:
    out = Outcome("AC-9")
    times = np.linspace(100.0, 800.0, 29)
    region = {"a1": 1.0, "a2": 3.0}
    phi, S = _hump_run("degenerate_quadratic", -0.3, 20, times)
    r = asymptotics.apriori_check_thm2ii(S, region, C=phi.phi0, field_name="F", trend_tol=0.0)
    out.add("x-weighted bound: negative increments", len(r["negative_increments"]), 0)
    out.add("x-weighted bound: hypothesis violations", len(r["hypothesis_violations"]), 0)
    out.add("x-weighted bound: sup normalized", r["sup_normalized"], 10.0)
    out.add("x-weighted bound: log-log trend slope", r["slope"], 0.0)
    out.tables["weighted"] = (["t", "sup_normalized"], r["trend"])
    phi2, S2 = _hump_run("linear_1py", -0.5, 20, times)
    r2 = asymptotics.apriori_check_thm2ii_prime(S2, region, C=phi2.phi0, field_name="F", trend_tol=0.0,
                                                phi=phi2, strict=True)
    out.add("flat bound: negative increments", len(r2["negative_increments"]), 0)
    out.add("flat bound: hypothesis violations", len(r2["hypothesis_violations"]), 0)
    out.add("flat bound: sup normalized", r2["sup_normalized"], 10.0)
    out.add("flat bound: log-log trend slope", r2["slope"], 0.0)
    out.notes.append(f"empirical Gamma: {r['Gamma']:.6g} (weighted), {r2['Gamma']:.6g} (flat)")
    out.tables["flat"] = (["t", "sup_normalized"], r2["trend"])
    return out


def ac10() -> Outcome:
    out = Outcome("AC-10")
    phi = degenerate_quadratic()
    C, d1 = 1.0, phi.dphi1
    lem2 = subsolution.check_asymptotic_subsolution(phi, subsolution.ShiftSpec(2.25), {"B": 1.75, "A": 6.0},
                                                    np.geomspace(1.0, 1e5, 51))
    t0 = lem2["t0_empirical"]
    beyond = [r for t, r in zip(lem2["t"], lem2["max_residual"]) if t0 is not None and t >= t0]
    out.add("barrier residual max beyond t0", max(beyond) if beyond else math.inf, 0.0)
    out.add("scaled residual max for t >= 2 t0", lem2["late_scaled_max"] if lem2["late_scaled_max"] is not None else math.inf,
            0.0, "<")
    mono = subsolution.check_psi_monotone(C, d1)
    out.add("max d psi_hat / d xbar", mono["max_derivative"], 0.0, "<")
    out.add("psi_hat derivative vs difference quotient", mono["numeric_mismatch"], 1e-8)
    patch = subsolution.check_patching(phi, 3.0, np.geomspace(10.0, 1e6, 21))
    tp = patch["t0_empirical"]
    late = [m for t, m in zip(patch["t"], patch["min_margin"]) if t >= 1e4]
    out.add("min patching margin for t in [1e4, 1e6]", min(late), 0.0, ">")
    out.notes.append(f"barrier t0 = {t0}, patching t0 = {tp}, delta = {patch['delta']:.6g}")
    sub = subsolution.build_patched_subsolution(phi.with_negative_extension(), {"delta": patch["delta"]})
    times = np.geomspace(1e3, 1e4, 21)
    rec = lattice.run_lattice(lattice.InitialData("step"), phi, 0.0, 1e4, [lattice.snapshot_observer(times)])
    S = rec.snapshots()
    cmp_ = subsolution.comparison_check(S, sub)
    out.add("comparison violations", len(cmp_["violations"]) + len(cmp_["tail_violations"]), 0)
    nc = subsolution.negative_control(S, sub, T=cmp_["T"], factor=0.01)
    out.add("negative control violations (amplitude x 0.01)", len(nc["violations"]) + len(nc["tail_violations"]), 0, ">")
    half = subsolution.negative_control(S, sub, T=cmp_["T"], factor=0.5)
    out.notes.append(f"halved amplitude gives {len(half['violations']) + len(half['tail_violations'])} violations")
    drops = [j["jump"] for r in cmp_["rows"] for j in r["junctions"]]
    out.notes.append(f"largest junction drop {min(drops):.4g}; upward jumps: "
                     f"{sum(j['upward'] for r in cmp_['rows'] for j in r['junctions'])}")
    out.tables["barrier"] = (["t", "max_residual", "scaled"], list(zip(lem2["t"], lem2["max_residual"], lem2["scaled"])))
    out.tables["patching"] = (["t", "min_margin", "center_margin"],
                              list(zip(patch["t"], patch["min_margin"], patch["center_margin"])))
    out.tables["comparison"] = (["t", "margin", "argmin_n", "tail_margin"],
                                [(r["t"], r["margin"], r["argmin_n"], r["tail_margin"]) for r in cmp_["rows"]])
    return out


def ac11() -> Outcome:
    out = Outcome("AC-11")
    p = inequalities.GronwallProblem(1.0, 0.5, inequalities.constant_weight(0.5, 0.5), 1.0)
    sol = inequalities.lemma_a2_solve(p)
    out.add("|A1 - 4/3|", abs(sol["A1"] - 4.0 / 3.0), 0.0)
    out.add("m", sol["m"], 3.0, ">")
    out.add("m", sol["m"], 4.0, "<")
    out.add("|I(m) - 1|", abs(sol["I_at_m"] - 1.0), 1e-10)
    A1, m = sol["A1"], sol["m"]
    seeds = {"constant": lambda t: np.full_like(t, A1), "decaying": lambda t: A1 + t ** (-m),
             "tenfold": lambda t: np.full_like(t, 10.0 * A1)}
    rows = []
    for name, v0 in seeds.items():
        r = inequalities.lemma_a2_check(p, v0)
        out.add(f"final iterate excess over bound ({name} seed)", r["excess"][-1], 1e-9 * A1)
        out.add(f"iterations to settle below bound ({name} seed)",
                r["first_within"] if r["first_within"] is not None else math.inf, 30)
        rows += [(name, k, e) for k, e in enumerate(r["excess"])]
    out.tables["iterates"] = (["seed", "iteration", "excess"], rows)
    grids = inequalities.interleaved_grids()
    a1rows = []
    for w in ("exp", "inv_square"):
        r = inequalities.lemma_a1_check(w, grids)
        out.add(f"A_psi spread across grids ({w})", r["spread"], 0.25)
        a1rows += [(w, k, f) for k, f in enumerate(r["fits"])]
    r = inequalities.lemma_a1_check("min1x", grids)
    out.notes.append(f"min(1, 1/x) (not integrable): spread {r['spread']:.3g}")
    out.tables["weighted_log"] = (["weight", "grid", "A_psi"], a1rows)
    return out


def ac12(targets: Optional[List[str]] = None) -> Outcome:
    out = Outcome("AC-12")
    targets = targets or [k for k in CRITERIA if k != "AC-12"]
    differing = []
    with tempfile.TemporaryDirectory() as tmp:
        for k in targets:
            a, b = os.path.join(tmp, "a"), os.path.join(tmp, "b")
            pa = run_criterion(k).write(a)
            pb = run_criterion(k).write(b)
            names = sorted(os.path.basename(x) for x in pa)
            if names != sorted(os.path.basename(x) for x in pb):
                differing.append(k)
                continue
            _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
            differing += mismatch + errors
    out.add("CSV files differing between two runs", len(differing), 0)
    out.notes.append(f"targets compared: {', '.join(targets)}")
    if differing:
        out.notes.append(f"differing: {', '.join(differing)}")
    return out


CRITERIA: Dict[str, Callable[[], Outcome]] = {
    "AC-1": ac1, "AC-2": ac2, "AC-3": ac3, "AC-4": ac4, "AC-5": ac5, "AC-6": ac6,
    "AC-7": ac7, "AC-8": ac8, "AC-9": ac9, "AC-10": ac10, "AC-11": ac11, "AC-12": ac12,
}

RUNTIME_LIMITS = {"AC-1": 1.0, "AC-2": 10.0, "AC-3": 5.0, "AC-4": 30.0, "AC-5": 120.0, "AC-6": 60.0,
                  "AC-7": 900.0, "AC-8": 600.0, "AC-9": 600.0, "AC-10": 300.0, "AC-11": 30.0}


def run_criterion(cid: str) -> Outcome:
    if cid not in CRITERIA:
        raise ConfigurationError(f"unknown criterion {cid!r}; choose from {', '.join(CRITERIA)}")
    start = time.perf_counter()
    out = CRITERIA[cid]()
    out.runtime = time.perf_counter() - start
    if cid in RUNTIME_LIMITS:
        out.add("runtime [s]", out.runtime, RUNTIME_LIMITS[cid])
    return out
