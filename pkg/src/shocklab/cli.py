"""Command-line entry point.

Exit codes: 0 success, 1 a check reported violations, 2 configuration
error (including bad flags), 3 numeric failure. Diagnostics go to stderr.
``SHOCKLAB_OUT`` sets the default output root.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import asymptotics, green, inequalities, lattice, pde, reproduce, subsolution, wavetrain
from .errors import ConfigurationError, ShocklabError
from .flux import LATTICE, classify_degeneracy, load_flux

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _default_out(name: str) -> str:
    return os.path.join(os.environ.get("SHOCKLAB_OUT", "shocklab_out"), name)


def _out_dir(args, name: str) -> str:
    path = args.out or _default_out(name)
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {path!r}: {exc}") from exc
    return path


def _dump(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file {path!r} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigurationError("config must be a JSON object")
    return cfg


def _merge(cfg: dict, args, keys) -> dict:
    """Command-line values override config values when given."""
    out = dict(cfg)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---- subcommands -----------------------------------------------------------------

def cmd_wavetrain(args) -> int:
    phi = load_flux(args.flux)
    if args.model == LATTICE:
        prof = wavetrain.solve_wavetrain_lattice(phi, overfall=tuple(args.overfall))
        resid = float(wavetrain.lattice_residual(prof, phi).max())
    else:
        prof = wavetrain.solve_wavetrain_continuous(phi, epsilon=args.epsilon, overfall=tuple(args.overfall))
        resid = float(wavetrain.continuous_residual(prof, phi).max())
    out = _out_dir(args, "wavetrain")
    prof.save(os.path.join(out, "profile.csv"), os.path.join(out, "profile.json"))
    print(json.dumps({"C": prof.C, "points": int(prof.values.size), "max_residual": resid}))
    return EXIT_OK


def _initial_data(spec: dict, phi) -> lattice.InitialData:
    kind = spec.get("kind", "step")
    kw = {k: spec[k] for k in ("alpha", "beta", "d", "table", "n_lo", "monotone") if k in spec}
    if kind == "wavetrain":
        kw["profile"] = wavetrain.solve_wavetrain_lattice(phi)
    return lattice.InitialData(kind, **kw)


def cmd_simulate_lattice(args) -> int:
    cfg = _merge(_load_config(args.config), args, ("flux", "t_end", "snapshots", "dt_max"))
    phi = load_flux(cfg.get("flux", "linear_2my"))
    t_end = float(cfg.get("t_end", 100.0))
    times = [float(s) for s in cfg.get("snapshots", [t_end])]
    data = _initial_data(cfg.get("initial", {"kind": "step"}), phi)
    rec = lattice.run_lattice(data, phi, 0.0, t_end, [lattice.snapshot_observer(times)],
                              dt_max=float(cfg.get("dt_max", 0.1)))
    out = _out_dir(args, "lattice")
    lattice.write_snapshots_csv(os.path.join(out, "snapshots.csv"), rec.snapshots())
    meta = dict(rec.metadata)
    _dump(os.path.join(out, "metadata.json"), meta)
    final = rec.final
    ok = final.bounded_ok and (final.monotone_ok or not _is_monotone_data(data))
    if not ok:
        _log("invariant violated: " + json.dumps({"bounded_ok": final.bounded_ok, "monotone_ok": final.monotone_ok}))
        return EXIT_VIOLATION
    return EXIT_OK


def _is_monotone_data(data: lattice.InitialData) -> bool:
    if data.kind in ("step", "wavetrain"):
        return True
    return bool(np.all(np.diff(np.asarray(data.table, dtype=float)) >= 0))


def cmd_simulate_pde(args) -> int:
    cfg = _merge(_load_config(args.config), args, ("flux", "t_end", "snapshots", "dx", "epsilon"))
    phi = load_flux(cfg.get("flux", "linear_2my"))
    eps = float(cfg.get("epsilon", 1.0))
    dx = float(cfg.get("dx", 0.05))
    t_end = float(cfg.get("t_end", 10.0))
    init = cfg.get("initial", {"kind": "step"})
    kind = init.get("kind", "step")
    x_range = init.get("x_range", [-40.0, 40.0])
    if kind == "wavetrain":
        prof = wavetrain.solve_wavetrain_continuous(phi, epsilon=eps)
        g = pde.init_grid("wavetrain", x_range, dx, eps, profile=prof, d=float(init.get("d", 0.0)))
    elif kind == "step":
        g = pde.init_grid("step", x_range, dx, eps, alpha=float(init.get("alpha", 0.0)),
                          beta=float(init.get("beta", 1.0)))
    else:
        raise ConfigurationError(f"simulate-pde supports initial kinds 'step' and 'wavetrain', not {kind!r}")
    times = [float(s) for s in cfg.get("snapshots", [t_end])]
    rec = pde.run_pde(g, phi, t_end, times)
    out = _out_dir(args, "pde")
    rows = [(s.t, x, v) for s in rec.snapshots for x, v in zip(s.x, s.values)]
    reproduce.write_table(os.path.join(out, "snapshots.csv"), ["t", "x", "f"], rows)
    _dump(os.path.join(out, "metadata.json"), rec.metadata)
    if not rec.final.bounded_ok:
        _log("maximum principle violated")
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_shift_fit(args) -> int:
    phi = load_flux(args.flux)
    states = lattice.read_snapshots_csv(args.snapshots)
    prof = wavetrain.solve_wavetrain_lattice(phi)
    A = args.A if args.A is not None else 4.0 * math.sqrt(prof.C)
    trace = asymptotics.shift_trace(states, prof, phi, A)
    fit = asymptotics.fit_log_shift(trace, window=tuple(args.window) if args.window else None,
                                    min_samples=args.min_samples)
    out = _out_dir(args, "shift")
    trace.to_csv(os.path.join(out, "trace.csv"))
    G0 = classify_degeneracy(LATTICE, phi).Gamma0
    asymptotics.write_fit_json(os.path.join(out, "fit.json"), fit, G0)
    print(json.dumps({"gamma_hat": fit["gamma_hat"], "Gamma0": G0}))
    return EXIT_OK


def cmd_kernel_check(args) -> int:
    rep = green.check_kernel_bounds(n_max=args.n_max, t_max=args.t_max, samples=args.samples)
    out = _out_dir(args, "kernel")
    _dump(os.path.join(out, "kernel_report.json"), rep.to_dict())
    print(json.dumps({"violations": len(rep.violations), "telescoping_max": rep.telescoping_max}))
    if not rep.ok:
        _log(f"{len(rep.violations)} kernel bound violations; first: {rep.violations[0]}")
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_subsolution_check(args) -> int:
    phi = load_flux(args.flux)
    C = phi.speed(LATTICE, (0.0, 1.0))
    reports = []
    lem = subsolution.check_asymptotic_subsolution(
        phi, subsolution.ShiftSpec(2.0 + args.delta0), {"B": args.B, "A": args.A},
        np.geomspace(args.t_min, args.t_max, 41))
    reports.append({"check": "barrier_residual", "t0_empirical": lem["t0_empirical"],
                    "max_margin": max(lem["max_residual"]), "violations": [] if lem["ok"] else ["residual sign"],
                    "detail": lem})
    mono = subsolution.check_psi_monotone(C, phi.dphi1)
    reports.append({"check": "psi_hat_decreasing", "t0_empirical": None, "max_margin": mono["max_derivative"],
                    "violations": mono["violations"], "detail": mono})
    patch = subsolution.check_patching(phi, args.window, np.geomspace(10.0, 1e6, 21), eps=args.eps)
    reports.append({"check": "patching", "t0_empirical": patch["t0_empirical"],
                    "max_margin": max(patch["min_margin"]), "violations": [] if patch["ok"] else ["no t0"],
                    "detail": patch})
    out = _out_dir(args, "subsolution")
    _dump(os.path.join(out, "subsolution_report.json"), reports)
    bad = [r["check"] for r in reports if r["violations"]]
    print(json.dumps({"failed": bad}))
    return EXIT_VIOLATION if bad else EXIT_OK


def cmd_apriori_check(args) -> int:
    states = lattice.read_snapshots_csv(args.snapshots, alpha=args.alpha, beta=args.beta)
    region = {"a1": args.a1, "a2": args.a2}
    if args.mode == "flat":
        phi = load_flux(args.flux) if args.flux else None
        rep = asymptotics.apriori_check_thm2ii_prime(states, region, args.gamma, C=args.C, field_name=args.field,
                                                     t_min=args.t_min, trend_tol=args.trend_tol, phi=phi,
                                                     strict=not args.exploratory)
    else:
        rep = asymptotics.apriori_check_thm2ii(states, region, args.gamma, C=args.C, field_name=args.field,
                                               t_min=args.t_min, trend_tol=args.trend_tol)
    out = _out_dir(args, "apriori")
    _dump(os.path.join(out, "apriori_report.json"), rep)
    reproduce.write_table(os.path.join(out, "trend.csv"), ["t", "sup_normalized"], rep["trend"])
    print(json.dumps({"sup_normalized": rep["sup_normalized"], "slope": rep["slope"], "ok": rep["ok"]}))
    return EXIT_OK if rep["ok"] else EXIT_VIOLATION


def cmd_gronwall(args) -> int:
    p = inequalities.GronwallProblem(args.A, args.alpha, inequalities.constant_weight(args.h, args.alpha), args.t0)
    sol = inequalities.lemma_a2_solve(p)
    A1 = sol["A1"]
    r = inequalities.lemma_a2_check(p, lambda t: np.full_like(t, args.seed_factor * A1))
    a1 = inequalities.lemma_a1_check(args.weight, inequalities.interleaved_grids())
    out = _out_dir(args, "gronwall")
    summary = {"A1": A1, "m": sol["m"], "I_at_m": sol["I_at_m"], "iterations": r["iterations"],
               "first_within": r["first_within"], "final_excess": r["excess"][-1], "bound_ok": r["ok"],
               "A_psi": a1["A_psi_empirical"], "A_psi_fits": a1["fits"], "A_psi_stable": a1["stable"]}
    _dump(os.path.join(out, "gronwall.json"), summary)
    reproduce.write_table(os.path.join(out, "iterate.csv"), ["t", "v", "bound"], zip(r["t"], r["v"], r["bound"]))
    print(json.dumps({"A1": A1, "m": sol["m"], "bound_ok": r["ok"], "A_psi_stable": a1["stable"]}))
    return EXIT_OK if r["ok"] and a1["stable"] else EXIT_VIOLATION


def cmd_reproduce(args) -> int:
    ids = list(reproduce.CRITERIA) if args.criterion == "all" else [args.criterion]
    for cid in ids:
        if cid not in reproduce.CRITERIA:
            raise ConfigurationError(f"unknown criterion {cid!r}; choose from {', '.join(reproduce.CRITERIA)} or all")
    out = args.out or _default_out("reproduce")
    failed = False
    for cid in ids:
        res = reproduce.run_criterion(cid)
        res.write(out)
        print(res.report(), flush=True)
        failed |= not res.passed
    return EXIT_VIOLATION if failed else EXIT_OK


# ---- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shocklab", description="Shock-profile lattice and PDE experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("wavetrain", help="solve for a traveling profile")
    p.add_argument("--flux", default="linear_2my", help="shipped label or JSON file")
    p.add_argument("--model", choices=["lattice", "continuous"], default="lattice")
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--overfall", type=float, nargs=2, default=[0.0, 1.0], metavar=("ALPHA", "BETA"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_wavetrain)

    p = sub.add_parser("simulate-lattice", help="integrate the lattice equation")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--flux")
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--snapshots", type=float, nargs="+")
    p.add_argument("--dt-max", dest="dt_max", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate_lattice)

    p = sub.add_parser("simulate-pde", help="integrate the viscous PDE")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--flux")
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--snapshots", type=float, nargs="+")
    p.add_argument("--dx", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate_pde)

    p = sub.add_parser("shift-fit", help="shift trace and logarithmic fit from lattice snapshots")
    p.add_argument("--snapshots", required=True, help="snapshots CSV from simulate-lattice")
    p.add_argument("--flux", default="degenerate_quadratic")
    p.add_argument("--A", type=float, help="window parameter (default 4 sqrt(C))")
    p.add_argument("--window", type=float, nargs=2, metavar=("T_LO", "T_HI"))
    p.add_argument("--min-samples", dest="min_samples", type=int, default=50)
    p.add_argument("--out")
    p.set_defaults(func=cmd_shift_fit)

    p = sub.add_parser("kernel-check", help="grid checks of the lattice heat kernel")
    p.add_argument("--t-max", dest="t_max", type=float, default=400.0)
    p.add_argument("--n-max", dest="n_max", type=int, default=400)
    p.add_argument("--samples", type=int, default=400)
    p.add_argument("--out")
    p.set_defaults(func=cmd_kernel_check)

    p = sub.add_parser("subsolution-check", help="barrier residual, monotonicity and patching reports")
    p.add_argument("--flux", default="degenerate_quadratic")
    p.add_argument("--delta0", type=float, default=0.25)
    p.add_argument("--B", type=float, default=1.75)
    p.add_argument("--A", type=float, default=6.0)
    p.add_argument("--t-min", dest="t_min", type=float, default=1.0)
    p.add_argument("--t-max", dest="t_max", type=float, default=1e5)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--window", type=float, default=3.0, help="half width of the patching window")
    p.add_argument("--out")
    p.set_defaults(func=cmd_subsolution_check)

    p = sub.add_parser("apriori-check", help="increment bounds in the front region")
    p.add_argument("--snapshots", required=True)
    p.add_argument("--mode", choices=["weighted", "flat"], default="weighted")
    p.add_argument("--a1", type=float, default=1.0)
    p.add_argument("--a2", type=float, default=3.0)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--gamma", type=float, help="hypothesis constant (default: measured)")
    p.add_argument("--field", choices=list(asymptotics.FIELDS), default="F")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--t-min", dest="t_min", type=float, default=0.0)
    p.add_argument("--trend-tol", dest="trend_tol", type=float, default=0.05)
    p.add_argument("--flux", help="flux for the phi'(0) >= 0 gate in flat mode")
    p.add_argument("--exploratory", action="store_true", help="skip the phi'(0) >= 0 gate")
    p.add_argument("--out")
    p.set_defaults(func=cmd_apriori_check)

    p = sub.add_parser("gronwall", help="delayed Gronwall bound and weighted-log constant")
    p.add_argument("--A", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--h", type=float, default=0.5, help="constant weight on [alpha, 1]")
    p.add_argument("--t0", type=float, default=1.0)
    p.add_argument("--seed-factor", dest="seed_factor", type=float, default=10.0)
    p.add_argument("--weight", choices=sorted(inequalities.WEIGHTS), default="exp")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gronwall)

    p = sub.add_parser("reproduce", help="run the canned pipeline of an acceptance criterion")
    p.add_argument("criterion", help="AC-1 ... AC-12 or all")
    p.add_argument("--out")
    p.set_defaults(func=cmd_reproduce)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_CONFIG
    try:
        return args.func(args)
    except ShocklabError as exc:
        _log(f"error: {exc}")
        return exc.exit_code
    except (ValueError, OSError) as exc:
        _log(f"error: {exc}")
        return EXIT_CONFIG


dispatch = main


if __name__ == "__main__":
    sys.exit(main())
