"""``gridcert`` command line.

Exit codes: 0 ok, 2 case/parse error, 3 singular matrix, 4 divergence.
"""
import argparse
import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from gridcert.certifier import DEFAULT_DELTA_PROBE, certify, constants_for, max_power_master
from gridcert.kernels import BACKEND
from gridcert.netmodel import CaseFormatError, Mode, load_case
from gridcert.numerics import NoRootError, SingularMatrixError
from gridcert.powerflow import SolverConfig, Variant, build_model, solve

EXIT_OK, EXIT_PARSE, EXIT_SINGULAR, EXIT_DIVERGED = 0, 2, 3, 4

_num = {"type": ["number", "null"]}
_cert_schema = {
    "type": "object",
    "required": ["mode", "method", "verdict", "constants", "h_ratio", "h_threshold",
                 "delta", "beta"],
    "properties": {
        "mode": {"enum": [m.value for m in Mode]},
        "method": {"enum": [v.value for v in Variant]},
        "verdict": {"enum": ["quadratic", "linear", "no_guarantee"]},
        "constants": {
            "type": "object",
            "required": ["alpha", "xi", "rho", "mu", "gamma", "first_step"],
            "properties": {k: _num for k in ("alpha", "xi", "rho", "mu", "gamma", "first_step")},
        },
        **{k: _num for k in ("h_ratio", "h_threshold", "h_theorem1", "delta", "beta",
                             "lipschitz_k", "r_move", "alpha_max", "beta_report",
                             "delta_report", "delta_probe")},
    },
}
_solve_schema = {
    "type": "object",
    "required": ["mode", "method", "status", "converged", "iterations", "final_residual",
                 "min_voltage", "residual_norms"],
    "properties": {
        "mode": {"enum": [m.value for m in Mode]},
        "method": {"enum": [v.value for v in Variant]},
        "status": {"enum": ["converged", "diverged", "max_iter", "singular_jacobian"]},
        "converged": {"type": "boolean"},
        "iterations": {"type": "integer", "minimum": 0},
        "final_residual": _num,
        "min_voltage": _num,
        "residual_norms": {"type": "array", "items": _num},
    },
}
REPORT_SCHEMA = {
    "type": "object",
    "required": ["case", "certificates", "solves", "timing_ms"],
    "properties": {
        "case": {
            "type": "object",
            "required": ["path", "nodes", "branches", "power_nodes", "v_master"],
        },
        "certificates": {"type": "array", "items": _cert_schema},
        "solves": {"type": "array", "items": _solve_schema},
        "max_power": {"type": "object"},
        "timing_ms": {"type": "number", "minimum": 0},
    },
}


def _precision():
    try:
        return max(0, int(os.environ.get("GRIDCERT_PRECISION", "6")))
    except ValueError:
        return 6


def _clean(obj, prec):
    """JSON-ready copy: enums to values, floats rounded, non-finite to null."""
    if isinstance(obj, dict):
        return {k: _clean(v, prec) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v, prec) for v in obj]
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(f"{x:.{prec}e}")
    return obj


def _case_meta(path, case, model):
    return {
        "path": str(path),
        "nodes": len(case.nodes),
        "branches": len(case.branches),
        "power_nodes": model.size,
        "v_master": case.v_master,
        "mode": model.mode.value,
        "vref_from_master": case.vref_from_master,
    }


def _solve_summary(model, method, result):
    return {
        "mode": model.mode.value,
        "method": method.value,
        "status": result.status,
        "converged": result.converged,
        "iterations": result.iterations,
        "final_residual": result.final_residual,
        "min_voltage": result.min_voltage if result.converged else None,
        "residual_norms": list(result.trace.residual_norms),
    }


def write_trace(path, result):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "residual_norm", "step_norm"])
        for k, rec in enumerate(result.trace.records):
            w.writerow([k, repr(rec.residual_norm), repr(rec.step_norm)])


def _emit(report, args):
    text = json.dumps(_clean(report, _precision()), indent=2, sort_keys=True)
    if getattr(args, "json", None):
        Path(args.json).write_text(text + "\n")
    print(text)


def _methods(arg):
    return [Variant.NEWTON, Variant.APPROX] if arg == "both" else [Variant.parse(arg)]


def _modes(arg, case):
    if arg == "both":
        return [Mode.MASTER_SLAVE, Mode.ISLAND]
    return [case.mode if arg is None else Mode.parse(arg)]


def cmd_certify(args):
    case = load_case(args.case)
    t0 = time.perf_counter()
    certs = []
    model = None
    for mode in _modes(args.mode, case):
        model = build_model(case, mode)
        consts = constants_for(model)
        for method in _methods(args.method):
            certs.append(certify(consts, method, args.delta_probe).as_dict())
    report = {"case": _case_meta(args.case, case, model), "certificates": certs,
              "solves": [], "timing_ms": (time.perf_counter() - t0) * 1e3}
    _emit(report, args)
    return EXIT_OK


def cmd_solve(args):
    case = load_case(args.case)
    t0 = time.perf_counter()
    certs, solves, results = [], [], []
    model = None
    for mode in _modes(args.mode, case):
        model = build_model(case, mode)
        consts = constants_for(model)
        for method in _methods(args.method):
            certs.append(certify(consts, method, args.delta_probe).as_dict())
            cfg = SolverConfig(tol=args.tol, max_iter=args.max_iter, variant=method)
            res = solve(model, cfg)
            results.append(res)
            solves.append(_solve_summary(model, method, res))
    report = {"case": _case_meta(args.case, case, model), "certificates": certs,
              "solves": solves, "timing_ms": (time.perf_counter() - t0) * 1e3}
    if args.trace:
        write_trace(args.trace, results[-1])
    _emit(report, args)
    statuses = {r.status for r in results}
    if "singular_jacobian" in statuses:
        return EXIT_SINGULAR
    if statuses - {"converged"}:
        return EXIT_DIVERGED
    return EXIT_OK


def _max_power(model):
    consts = constants_for(model)
    try:
        alpha_m = max_power_master(consts.rho, consts.mu)
    except (NoRootError, ValueError):
        alpha_m = None
    ok = alpha_m is not None and consts.alpha <= alpha_m
    return {
        "alpha_m": alpha_m,
        "alpha": consts.alpha,
        "rho": consts.rho,
        "mu": consts.mu,
        "guaranteed": ok,
        "status": "guaranteed" if ok else "not guaranteed",
    }


def cmd_maxpower(args):
    case = load_case(args.case)
    model = build_model(case, Mode.MASTER_SLAVE)
    _emit(_max_power(model), args)
    return EXIT_OK


def sweep_rows(case, scales, mode, method, tol=1e-12, max_iter=50, delta_probe=None):
    rows = []
    for s in scales:
        model = build_model(case.scaled(s), mode)
        try:
            verdict = certify(constants_for(model), method, delta_probe).verdict.value
        except SingularMatrixError:
            verdict = "singular"
        res = solve(model, SolverConfig(tol=tol, max_iter=max_iter, variant=method))
        rows.append({"scale": float(s), "verdict": verdict, "converged": res.converged,
                     "iters": res.iterations, "final_residual": res.final_residual})
    return rows


def cmd_sweep(args):
    if not args.scale_min < args.scale_max or args.steps < 2:
        print("error: need scale-min < scale-max and steps >= 2", file=sys.stderr)
        return EXIT_PARSE
    case = load_case(args.case)
    mode = _modes(args.mode, case)[0]
    method = Variant.parse(args.method if args.method != "both" else "newton")
    scales = np.linspace(args.scale_min, args.scale_max, args.steps)
    rows = sweep_rows(case, scales, mode, method, args.tol, args.max_iter, args.delta_probe)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scale", "verdict", "converged", "iters", "final_residual"])
    for r in rows:
        w.writerow([f"{r['scale']:.10g}", r["verdict"], str(r["converged"]).lower(), r["iters"],
                    repr(r["final_residual"])])
    if args.csv:
        Path(args.csv).write_text(buf.getvalue())
    sys.stdout.write(buf.getvalue())
    if mode is Mode.MASTER_SLAVE:
        mp = _max_power(build_model(case, mode))
        if mp["alpha_m"] is not None and mp["alpha"] > 0:
            print(f"# certified scale limit {float(mp['alpha_m'] / mp['alpha']):.6g}", file=sys.stderr)
    return EXIT_OK


def build_report(path, case, delta_probe=None, tol=1e-12, max_iter=50):
    t0 = time.perf_counter()
    certs, solves = [], []
    model = None
    for mode in (Mode.MASTER_SLAVE, Mode.ISLAND):
        model = build_model(case, mode)
        consts = constants_for(model)
        for method in (Variant.NEWTON, Variant.APPROX):
            certs.append(certify(consts, method, delta_probe).as_dict())
            res = solve(model, SolverConfig(tol=tol, max_iter=max_iter, variant=method))
            solves.append(_solve_summary(model, method, res))
    ms_model = build_model(case, Mode.MASTER_SLAVE)
    return {"case": _case_meta(path, case, ms_model), "certificates": certs, "solves": solves,
            "max_power": _max_power(ms_model), "timing_ms": (time.perf_counter() - t0) * 1e3}


def cmd_report(args):
    case = load_case(args.case)
    report = build_report(args.case, case, args.delta_probe, args.tol, args.max_iter)
    _emit(report, args)
    if any(not s["converged"] for s in report["solves"]):
        return EXIT_DIVERGED
    return EXIT_OK


def make_parser():
    parser = argparse.ArgumentParser(
        prog="gridcert",
        description="dc microgrid power flow with a priori convergence certificates",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s (kernels: {BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, method_default="newton"):
        p.add_argument("case", help="case CSV file")
        p.add_argument("--mode", choices=["master-slave", "island", "both"], default=None,
                       help="operating mode (default: from the case file)")
        p.add_argument("--method", choices=["newton", "approx", "both"], default=method_default)
        p.add_argument("--tol", type=float, default=1e-12)
        p.add_argument("--max-iter", type=int, default=50)
        p.add_argument("--delta-probe", type=float, default=DEFAULT_DELTA_PROBE)
        p.add_argument("--json", metavar="PATH", help="also write the JSON report here")

    p = sub.add_parser("certify", help="convergence certificate without solving")
    common(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("solve", help="solve the power flow and report")
    common(p)
    p.add_argument("--trace", metavar="PATH", help="write iter,residual_norm,step_norm CSV")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("maxpower", help="largest load magnitude certified for Newton")
    p.add_argument("case")
    p.add_argument("--json", metavar="PATH")
    p.set_defaults(func=cmd_maxpower)

    p = sub.add_parser("sweep", help="scale loads and tabulate certificate vs outcome")
    common(p)
    p.add_argument("--scale-min", type=float, default=0.5)
    p.add_argument("--scale-max", type=float, default=2.0)
    p.add_argument("--steps", type=int, default=16)
    p.add_argument("--csv", metavar="PATH", help="also write the CSV here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="all modes and methods in one JSON report")
    common(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CaseFormatError, OSError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SingularMatrixError as exc:
        print(f"error: singular matrix: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except (ZeroDivisionError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
