"""Command line entry point: ``dgbench <command> [flags]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import (ConfigError, RunConfig, SECTIONS, default_h, ledgers, run_suite, sobolev_section, trees_scaling)
from .reports import jsonable

VERIFY_TARGETS = {
    "energy": ["energy"],
    "degiorgi": ["degiorgi"],
    "shadow": ["shadow"],
    "oscillation": ["oscillation"],
    "all": list(SECTIONS),
}


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON file with RunConfig fields; flags override it")
    p.add_argument("--n", type=int, choices=(2, 3))
    p.add_argument("--h", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--Lambda", dest="Lam", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--directions", type=int)
    p.add_argument("--sobolev-s", dest="sobolev_s", type=float)
    p.add_argument("--out", type=str)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dgbench", description="Discrete checks of the De Giorgi regularity chain.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one boundary value problem and print its diagnostics")
    _common(p)
    p.add_argument("--kind", default="checkerboard", choices=("identity", "checkerboard", "random-rotation"))
    p.add_argument("--boundary", default="wave")
    p.add_argument("--radius", type=float, default=1.0)

    p = sub.add_parser("verify", help="run verification sections")
    p.add_argument("target", choices=sorted(VERIFY_TARGETS))
    _common(p)

    p = sub.add_parser("constants", help="print the constants ledgers")
    _common(p)

    p = sub.add_parser("trees", help="shadow optimality on the trees configuration")
    _common(p)
    p.add_argument("--eps", type=float, default=0.125)
    p.add_argument("--delta", type=float, default=1.0 / 32)

    p = sub.add_parser("holder", help="multiscale Hoelder exponent of one solution")
    _common(p)
    p.add_argument("--kind", default="checkerboard", choices=("identity", "checkerboard", "random-rotation"))
    p.add_argument("--boundary", default="wave")
    return parser


def load_config(args) -> RunConfig:
    base = json.loads(args.config.read_text()) if args.config else {}
    cfg = RunConfig.from_dict(base)
    if args.n is not None:
        cfg.n = args.n
        if args.h is None and "h" not in base:
            cfg.h = default_h(args.n)
    if args.h is not None:
        cfg.h = args.h
    if args.lam is not None or args.Lam is not None:
        lam = args.lam if args.lam is not None else 1.0
        Lam = args.Lam if args.Lam is not None else lam
        cfg.ellipticity = [[lam, Lam]]
    for name in ("seed", "directions", "sobolev_s", "out"):
        v = getattr(args, name)
        if v is not None:
            setattr(cfg, name, v)
    return cfg.validate()


def _emit(doc, out: str | None, name: str):
    text = json.dumps(jsonable(doc), indent=2, sort_keys=True)
    print(text)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / name).write_text(text)


def cmd_verify(args, cfg) -> int:
    suite = run_suite(cfg, VERIFY_TARGETS[args.target])
    for sec, info in suite.sections.items():
        print(f"{sec:12s} {'PASS' if info['pass'] else 'FAIL'}  checks={info['checks']} failed={info['failed']}")
    for r in suite.failures():
        print(f"  FAIL {r.lemma_id} {r.inputs.get('field_id') or ''} lhs={r.lhs:.6g} rhs={r.rhs:.6g} {' '.join(r.notes)}")
    if cfg.out:
        print(f"report written to {Path(cfg.out) / 'suite_report.json'}")
    print("overall", "PASS" if suite.overall_pass else "FAIL")
    return 0 if suite.overall_pass else 1


def cmd_constants(args, cfg) -> int:
    from .energy import ConstantsLedger

    sob = sobolev_section(cfg)
    doc = {}
    for key, (L, OL) in ledgers(cfg, sob.S, sob.provenance).items():
        if key == "1,1" and len(cfg.ellipticity) == 1 and cfg.ellipticity[0] != [1.0, 1.0]:
            continue
        doc[key] = dict(L.snapshot(), A=OL.A, oscillation=OL.snapshot())
    if not doc:
        lam, Lam = cfg.ellipticity[0]
        L = ConstantsLedger(lam, Lam, cfg.n, sob.S, S_provenance=sob.provenance)
        doc[f"{lam:g},{Lam:g}"] = L.snapshot()
    _emit(doc, cfg.out, "constants.json")
    return 0


def cmd_solve(args, cfg) -> int:
    from .elliptic import WeakProblem, boundary_function, energy, make_coefficients, solve, weak_residual
    from .geometry import BallDomain, dump_field

    lam, Lam = cfg.ellipticity[-1]
    dom = BallDomain(cfg.n, args.radius, cfg.h)
    if args.kind == "identity":
        lam = Lam = 1.0
    coef = make_coefficients(args.kind, dom, lam, Lam, cfg.seed)
    u, info = solve(WeakProblem(coef, boundary_function(args.boundary)), return_info=True)
    doc = {"domain": dom.describe(), "coefficients": coef.describe(), "iterations": info.iterations,
           "relres": info.relres, "weak_residual": weak_residual(u, coef), "energy": energy(u, coef),
           "min": float(u.values.min()), "max": float(u.values.max())}
    if cfg.out:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        dump_field(u, Path(cfg.out) / f"solution-{args.kind}-{args.boundary}", args.boundary)
    _emit(doc, cfg.out, "solve.json")
    return 0


def cmd_trees(args, cfg) -> int:
    from .shadow import build_trees_example, default_directions, trees_report

    D = default_directions(2, cfg.seed, cfg.directions)
    h = args.h if args.h is not None else None
    rep = trees_report(build_trees_example(args.eps, args.delta, h), D)
    scal = trees_scaling(args.eps, [args.delta, args.delta / 2], D)
    _emit({"trees": rep.to_json(), "scaling": scal.to_json()}, cfg.out, "trees.json")
    return 0 if rep.ok and scal.ok else 1


def cmd_holder(args, cfg) -> int:
    from .degiorgi import lambda_constant_A
    from .elliptic import WeakProblem, boundary_function, make_coefficients, solve
    from .energy import ConstantsLedger
    from .geometry import BallDomain
    from .oscillation import OscillationLedger, holder_exponent

    lam, Lam = cfg.ellipticity[-1]
    if args.kind == "identity":
        lam = Lam = 1.0
    dom = BallDomain(cfg.n, 2.0, cfg.h)
    coef = make_coefficients(args.kind, dom, lam, Lam, cfg.seed)
    u = solve(WeakProblem(coef, boundary_function(args.boundary)))
    sob = sobolev_section(cfg)
    L = ConstantsLedger(lam, Lam, cfg.n, sob.S, S_provenance=sob.provenance)
    _, rep = holder_exponent(u, OscillationLedger(L, lambda_constant_A(L)))
    _emit(rep.to_json(), cfg.out, "holder.json")
    return 0 if rep.ok else 1


COMMANDS = {"verify": cmd_verify, "constants": cmd_constants, "solve": cmd_solve, "trees": cmd_trees, "holder": cmd_holder}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except (ConfigError, ValueError, TypeError, json.JSONDecodeError) as exc:
        parser.print_usage(sys.stderr)
        print(f"dgbench: error: {exc}", file=sys.stderr)
        return 2
    return COMMANDS[args.command](args, cfg)


if __name__ == "__main__":
    sys.exit(main())
