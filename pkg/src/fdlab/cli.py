"""Command-line entry point: ``fdlab <subcommand> ...``.

Every subcommand assembles a raw config (``--config`` file, then flag
overrides), validates it with ``parse_config`` and echoes the validated
config into each output file. Exit codes: 0 success or PASS, 1 a finished
run that did not pass, 2 invalid input.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .cli_io import (DEFAULT_OUTPUT_DIR, OUTPUT_ENV, ConfigError, RunConfig, dumps, emit_results,
                     load_raw, parse_config)
from .exponents import compute_exponents, kappa_of_gamma

# per subcommand: flag name -> (config block, field)
OVERRIDES = {
    "steady": {"alpha": ("steady", "alpha"), "rmax": ("steady", "r_max"), "tol": ("steady", "tol")},
    "linearize": {"alpha": ("linearize", "alpha"), "kappa": ("linearize", "kappa"),
                  "gamma": ("linearize", "gamma"), "rmax": ("linearize", "r_max")},
    "evolve": {"alpha": ("evolve", "alpha"), "v0": ("evolve", "kind"), "b": ("evolve", "b"),
               "gamma": ("evolve", "gamma"), "eps": ("evolve", "eps"),
               "t_end": ("evolve", "t_end"), "R": ("solver", "R")},
    "certify": {"lemma": ("certify", "lemma"), "alpha": ("certify", "alpha"),
                "gamma": ("certify", "gamma"), "beta": ("certify", "beta"),
                "A": ("certify", "A"), "eps": ("certify", "eps"), "b": ("certify", "b")},
    "rate-experiment": {"theorem": ("rate_experiment", "theorem"),
                        "alpha": ("rate_experiment", "alpha"), "b": ("rate_experiment", "b"),
                        "gamma": ("rate_experiment", "gamma"),
                        "direction": ("rate_experiment", "direction"),
                        "t_end": ("rate_experiment", "t_end"), "R": ("solver", "R")},
    "instability": {"alpha": ("instability", "alpha"), "eps": ("instability", "eps"),
                    "side": ("instability", "side"), "t_end": ("instability", "t_end")},
    "transform": {"alpha": ("transform", "alpha"), "T": ("transform", "T"),
                  "t_end": ("transform", "t_end")},
}


def _common(sp: argparse.ArgumentParser, config_flag: str = "--config") -> None:
    sp.add_argument(config_flag, dest="config", metavar="CFG.json", help="JSON run config")
    sp.add_argument("--n", type=int, help="dimension (overrides the config)")
    sp.add_argument("--p", type=float, help="exponent p = 1/m (overrides the config)")
    sp.add_argument("--seed", type=int, help="seed for randomized checks")
    sp.add_argument("--out-dir", help="output directory (default: $FDLAB_OUTPUT_DIR or fdlab_out)")
    sp.add_argument("--json", dest="json_out", metavar="PATH",
                    help="report path (default: <out-dir>/<command>-<run id>.json)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fdlab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("exponents", help="closed-form exponents for (n, p)")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--gamma", type=float, help="also report kappa(gamma)")
    sp.add_argument("--json", dest="as_json", action="store_true", help="emit one JSON object")

    sp = sub.add_parser("steady", help="regular steady state phi_alpha")
    _common(sp)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--rmax", type=float)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--csv", metavar="PATH", help="profile CSV (r,value,deriv)")

    sp = sub.add_parser("linearize", help="linearized profile f_(alpha,kappa)")
    _common(sp)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--kappa", type=float)
    sp.add_argument("--gamma", type=float, help="used when --kappa is not given")
    sp.add_argument("--rmax", type=float)
    sp.add_argument("--csv", metavar="PATH")

    sp = sub.add_parser("evolve", help="time-dependent radial problem")
    _common(sp)
    sp.add_argument("--v0", choices=("above", "capped_above", "below", "exact"))
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--b", type=float)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--t-end", dest="t_end", type=float)
    sp.add_argument("--R", type=float, help="truncation radius")
    sp.add_argument("--trace", metavar="PATH", help="trace CSV (t,v_center,sup_dev)")
    sp.add_argument("--snapshots", metavar="DIR", help="directory for snapshot CSVs")

    sp = sub.add_parser("certify", help="construct and certify one comparison lemma")
    _common(sp, "--params")
    sp.add_argument("--lemma", type=int, choices=(2, 4, 6, 7, 8, 9, 10))
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--A", type=float)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--b", type=float)

    sp = sub.add_parser("rate-experiment", help="fit the convergence rate against kappa(gamma)")
    _common(sp)
    sp.add_argument("--theorem", type=int, choices=(1, 2))
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--b", type=float)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--direction", choices=("above", "below"))
    sp.add_argument("--t-end", dest="t_end", type=float)
    sp.add_argument("--R", type=float, help="truncation radius (default: from the arrival estimate)")
    sp.add_argument("--trace", metavar="PATH")

    sp = sub.add_parser("instability", help="growth or decay off the intersecting family")
    _common(sp)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--side", choices=("above", "below"))
    sp.add_argument("--t-end", dest="t_end", type=float)
    sp.add_argument("--trace", metavar="PATH")

    sp = sub.add_parser("transform", help="map a trace back to original variables")
    _common(sp)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--T", type=float, help="extinction time")
    sp.add_argument("--t-end", dest="t_end", type=float)
    sp.add_argument("--from-trace", metavar="CSV", help="transform an existing trace CSV")

    sp = sub.add_parser("suite", help="run the acceptance battery")
    sp.add_argument("--only", help="comma-separated criterion numbers")
    sp.add_argument("--out-dir")
    sp.add_argument("--json", dest="json_out", metavar="PATH")
    return ap


def assemble_config(args: argparse.Namespace) -> RunConfig:
    raw = load_raw(args.config) if getattr(args, "config", None) else {}
    for key in ("n", "p", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    if getattr(args, "out_dir", None):
        raw["output_dir"] = args.out_dir
    for flag, (block, key) in OVERRIDES.get(args.command, {}).items():
        val = getattr(args, flag, None)
        if val is not None:
            raw[block] = {**raw.get(block, {}), key: val}
    args.raw_config = raw
    return parse_config(raw)


def report_path(args, cfg: RunConfig) -> Path:
    if getattr(args, "json_out", None):
        return Path(args.json_out)
    return cfg.resolve_output_dir() / f"{args.command}-{cfg.run_id()}.json"


def _finish(args, cfg: RunConfig, result, ok: bool) -> int:
    path = emit_results(result, "json", report_path(args, cfg), cfg.as_dict())
    print(dumps({"ok": ok, "report": str(path)}))
    return 0 if ok else 1


# ---------------------------------------------------------------- subcommands

def cmd_exponents(args) -> int:
    from .exponents import Params
    exps = compute_exponents(Params(args.n, args.p))
    d = exps.as_dict()
    if args.gamma is not None:
        d["kappa(gamma)"] = kappa_of_gamma(exps, args.gamma)
    if args.as_json:
        print(dumps(d))
    else:
        width = max(len(k) for k in d)
        for k, v in d.items():
            print(f"{k:<{width}}  {v}")
    return 0


def cmd_steady(args) -> int:
    from .steady_states import solve_phi
    cfg = assemble_config(args)
    blk = cfg.steady
    prof = solve_phi(cfg.params, blk.alpha, blk.r_max, tol=blk.tol,
                     points_per_decade=blk.points_per_decade)
    if args.csv:
        emit_results(prof, "csv", args.csv, cfg.as_dict())
    return _finish(args, cfg, {"meta": prof.meta, "phi0": prof.values[0],
                               "phi_rmax": prof.values[-1]}, bool(prof.meta["residual_ok"]))


def cmd_linearize(args) -> int:
    from .linearized_profiles import solve_f
    cfg = assemble_config(args)
    blk = cfg.linearize
    kappa = blk.kappa if blk.kappa is not None else kappa_of_gamma(compute_exponents(cfg.params),
                                                                  blk.gamma)
    lp = solve_f(cfg.params, blk.alpha, kappa, blk.r_max)
    if args.csv:
        emit_results(lp.base, "csv", args.csv, cfg.as_dict())
    result = {"kappa": lp.kappa, "gamma": lp.gamma, "bound_constants": lp.bound_constants,
              "meta": lp.base.meta}
    return _finish(args, cfg, result, bool(lp.base.meta["residual_ok"]))


def cmd_evolve(args) -> int:
    from .radial_pde import evolve, make_initial_data
    cfg = assemble_config(args)
    blk, solver = cfg.evolve, cfg.solver
    if args.snapshots and solver.snapshot_every is None:
        solver = solver.with_(snapshot_every=blk.t_end / 10)
    v0 = make_initial_data(cfg.params, blk.alpha, blk.kind, solver.grid(), b=blk.b,
                           gamma=blk.gamma, eps=blk.eps)
    trace = evolve(solver, cfg.params, v0, blk.t_end, alpha=blk.alpha)
    if args.trace:
        emit_results(trace, "csv", args.trace, cfg.as_dict())
    if args.snapshots:
        for snap in trace.snapshots:
            emit_results(snap, "csv", Path(args.snapshots) / f"snapshot_t{snap.meta['t']:09.4f}.csv",
                         cfg.as_dict())
    return _finish(args, cfg, trace, trace.status.value == "OK")


def cmd_certify(args) -> int:
    from .comparison_lab import run_certification
    cfg = assemble_config(args)
    blk = cfg.certify
    res = run_certification(cfg.params, blk.lemma, alpha=blk.alpha, gamma=blk.gamma, beta=blk.beta,
                            mu=blk.mu, A=blk.A, B=blk.B, b=blk.b, eps=blk.eps, r_max=blk.r_max,
                            t_end=blk.t_end, seed=cfg.seed)
    return _finish(args, cfg, res, res["passed"])


def cmd_rate(args) -> int:
    from .rates import default_t_end, rate_config, run_theorem1, run_theorem2
    cfg = assemble_config(args)
    blk = cfg.rate_experiment
    t_end = blk.t_end or default_t_end(kappa_of_gamma(compute_exponents(cfg.params), blk.gamma))
    solver = cfg.solver
    if "R" not in (args.raw_config.get("solver") or {}):
        solver = solver.with_(R=rate_config(cfg.params, blk.gamma, t_end).R)
    run = run_theorem1 if blk.theorem == 1 else run_theorem2
    rep, trace = run(cfg.params, blk.alpha, blk.b, blk.gamma, blk.direction, config=solver,
                     t_end=t_end, tolerance=blk.tolerance)
    if args.trace:
        emit_results(trace, "csv", args.trace, cfg.as_dict())
    return _finish(args, cfg, rep, rep.verdict.value == "PASS")


def cmd_instability(args) -> int:
    from .rates import instability_config, run_instability
    cfg = assemble_config(args)
    blk = cfg.instability
    rep, trace = run_instability(cfg.params, blk.alpha, blk.eps, blk.side,
                                 config=instability_config(), t_end=blk.t_end)
    if args.trace:
        emit_results(trace, "csv", args.trace, cfg.as_dict())
    return _finish(args, cfg, rep, rep.passed)


def cmd_transform(args) -> int:
    from .cli_io import read_csv
    from .radial_pde import EvolutionTrace, evolve, make_initial_data
    from .rates import to_original_variables
    cfg = assemble_config(args)
    blk = cfg.transform
    if args.from_trace:
        _, _, cols, data = read_csv(args.from_trace)
        t, vc, sd = (data[:, cols.index(c)] for c in ("t", "v_center", "sup_dev"))
        zero = np.zeros_like(t)
        trace = EvolutionTrace(t, vc, zero, sd, vc, zero)
    else:
        v0 = make_initial_data(cfg.params, blk.alpha, "exact", cfg.solver.grid())
        trace = evolve(cfg.solver, cfg.params, v0, blk.t_end, alpha=blk.alpha)
    ot = to_original_variables(trace, cfg.params.m, blk.T)
    return _finish(args, cfg, ot, True)


def cmd_suite(args) -> int:
    from .acceptance import run_suite
    only = [int(x) for x in args.only.split(",")] if args.only else None
    results = run_suite(only)
    out = {str(r.number): {"name": r.name, "passed": r.passed, "seconds": r.seconds,
                           "measured": r.measured} for r in results}
    out_dir = args.out_dir or os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT_DIR)
    path = Path(args.json_out) if args.json_out else Path(out_dir) / "suite.json"
    emit_results(out, "json", path, {"criteria": [r.number for r in results]})
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed; report {path}")
    return 0 if passed == len(results) else 1


COMMANDS = {
    "exponents": cmd_exponents, "steady": cmd_steady, "linearize": cmd_linearize,
    "evolve": cmd_evolve, "certify": cmd_certify, "rate-experiment": cmd_rate,
    "instability": cmd_instability, "transform": cmd_transform, "suite": cmd_suite,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"fdlab: config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"fdlab: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
