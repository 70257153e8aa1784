"""Command-line front end: ``ddefix solve | check | demo | bench``.

Exit codes: 0 success, 1 failed check or other error, 2 invalid specification,
3 no contracting weight, 4 divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import demos
from .errors import (
    DDEFixError,
    DivergenceError,
    InvalidInputError,
    NotContractionError,
)
from .grid import Weight, quadrature_tolerance
from .operators import default_probe_grid, empirical_operator_norm, lipschitz_bound
from .solver import SolveReport, check_causality, compare_nu, resolve_nu, select_nu, solve
from .specfile import ProblemSpec, dump_spec, load_spec
from .verify import results_csv, run_benchmarks

EXIT_OK, EXIT_FAIL, EXIT_SPEC, EXIT_NOT_CONTRACTING, EXIT_DIVERGENCE = 0, 1, 2, 3, 4

log = logging.getLogger("ddefix")


def write_solution_csv(report: SolveReport, path: Path):
    u = report.solution
    header = ",".join(["t"] + [f"u_{k + 1}" for k in range(u.dim)])
    data = np.column_stack([u.grid.nodes, u.values])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def write_report_json(report: SolveReport, path: Path, extra: dict | None = None):
    doc = report.summary()
    if extra:
        doc.update(extra)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _with_overrides(spec: ProblemSpec, args) -> ProblemSpec:
    doc = spec.to_dict()
    if getattr(args, "nu", None) is not None:
        doc["solver"]["nu"] = args.nu
    if getattr(args, "tol", None) is not None:
        doc["solver"]["tol"] = args.tol
    if getattr(args, "max_iter", None) is not None:
        doc["solver"]["max_iter"] = args.max_iter
    return ProblemSpec(doc)


def _print_table(rows: list[tuple]):
    widths = [max(len(str(r[k])) for r in rows) for k in range(len(rows[0]))]
    for r in rows:
        print("  ".join(str(c).ljust(w) for c, w in zip(r, widths)))


def cmd_solve(args) -> int:
    spec = _with_overrides(load_spec(args.spec), args)
    report = solve(spec.build())
    out = Path(args.output)
    write_solution_csv(report, out)
    report_path = Path(args.report) if args.report else out.with_suffix(".json")
    write_report_json(report, report_path, {"spec": str(args.spec)})
    print(f"nu={report.nu_used:g} lip={report.lip_at_nu:.4g} iterations={report.iterations} "
          f"certified_error={report.certified_error:.3e}")
    print(f"wrote {out} and {report_path}")
    return EXIT_OK


def _check_causality(spec: ProblemSpec) -> list[tuple]:
    t_cut, pert = spec.perturbation()
    res = check_causality(spec.build(), t_cut, pert)
    return [("causality", f"t_cut={t_cut:g}", f"{res.max_pre_cut_change:.3e}", f"{max(res.allowance, 1e-10):.3e}",
             "PASS" if res.passed else "FAIL")]


def _check_nu(spec: ProblemSpec) -> list[tuple]:
    prob = spec.build()
    pair = spec.nu_pair()
    if pair is None:
        nu, _ = resolve_nu(prob)
        pair = (nu, 2 * nu)
    res = compare_nu(prob, *pair)
    return [("nu-independence", f"nu={pair[0]:g} vs {pair[1]:g}", f"{res.max_abs_diff:.3e}",
             f"{res.allowance:.3e}", "PASS" if res.passed else "FAIL")]


def _check_norms(spec: ProblemSpec) -> list[tuple]:
    prob = spec.build()
    rhs = prob.rhs
    if not rhs.linear:
        raise InvalidInputError("the norms check needs a linear right-hand side")
    nu = prob.nu if prob.nu is not None else select_nu(rhs, prob.p, prob.target_contraction)
    w = Weight(nu, prob.p)
    grid = default_probe_grid(rhs, w)
    theory = lipschitz_bound(rhs, w)
    empirical = empirical_operator_norm(rhs, w, grid=grid)
    eps = quadrature_tolerance(grid, w)
    ratio = empirical / theory if theory > 0 else (0.0 if empirical == 0 else math.inf)
    return [("norms", f"nu={nu:g} bound={theory:.6g} empirical={empirical:.6g}", f"ratio={ratio:.6f}",
             f"<= {1 + eps:.6f}", "PASS" if ratio <= 1 + eps else "FAIL")]


CHECKS = {"causality": _check_causality, "nu-independence": _check_nu, "norms": _check_norms}


def cmd_check(args) -> int:
    spec = _with_overrides(load_spec(args.spec), args)
    rows = CHECKS[args.kind](spec)
    _print_table([("check", "setting", "observed", "allowed", "result")] + rows)
    return EXIT_OK if all(r[-1] == "PASS" for r in rows) else EXIT_FAIL


def cmd_demo(args) -> int:
    if args.name not in demos.DEMOS:
        print(f"unknown demo {args.name!r}; available: {', '.join(demos.DEMOS)}", file=sys.stderr)
        return EXIT_SPEC
    spec = _with_overrides(demos.spec(args.name), args)
    out = Path(args.output or f"demo-{args.name}")
    out.mkdir(parents=True, exist_ok=True)
    spec_path = dump_spec(spec, out / "spec.json")
    report = solve(spec.build())
    write_solution_csv(report, out / "solution.csv")
    write_report_json(report, out / "report.json", {"demo": args.name})
    print(f"{args.name}: nu={report.nu_used:g} iterations={report.iterations} "
          f"certified_error={report.certified_error:.3e}")
    print(f"wrote {spec_path}, {out / 'solution.csv'}, {out / 'report.json'}")
    return EXIT_OK


def cmd_bench(args) -> int:
    results = run_benchmarks(args.names or None)
    sys.stdout.write(results_csv(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--nu", type=float, help="force the weight instead of selecting it")
    common.add_argument("--tol", type=float, help="a-posteriori stopping tolerance")
    common.add_argument("--max-iter", type=int, dest="max_iter", help="iteration budget")

    parser = argparse.ArgumentParser(prog="ddefix", description="Weighted Picard solver for causal evolution equations.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="solve a JSON problem specification")
    p.add_argument("spec")
    p.add_argument("-o", "--output", required=True, help="solution CSV path")
    p.add_argument("--report", help="JSON report path (default: next to the CSV)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("check", parents=[common], help="run a property check on a specification")
    p.add_argument("kind", choices=sorted(CHECKS))
    p.add_argument("spec")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("demo", parents=[common], help="write and solve a registered demo")
    p.add_argument("name", help=f"one of: {', '.join(demos.DEMOS)}")
    p.add_argument("-o", "--output", help="output directory (default: demo-<name>)")
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("bench", help="run the benchmark registry and print CSV rows")
    p.add_argument("names", nargs="*")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except NotContractionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONTRACTING
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except DDEFixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
