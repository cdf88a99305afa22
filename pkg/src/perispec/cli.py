"""Command-line front end.

Usage::

    perispec TASK CONFIG.ini [--output-dir DIR] [--threads N] [--verbose]

Tasks: ``spectrum`` (principal spectrum points over a list of couplings),
``lambda_p`` (positive root of the spectrum curve), ``upper_bound`` (root of
the time-averaged companion problem), ``kpp_scan`` (nonlinear persistence
verdicts across couplings), ``validate`` (seeded self-check battery; the
config file is optional for this task).

Every task writes CSV files tagged ``# perispec-csv v1``, a ``summary.json``,
and a human-readable ``report.txt`` into the output directory.  Outputs
contain no timestamps or machine-specific data, so rerunning a task with the
same config produces byte-identical files, independent of the thread count.

Exit codes: 0 success, 1 the task's own acceptance condition failed (a failed
check, a violated bound, an inconsistent scan), 2 bad usage or configuration,
3 numerical failure (unstable integration or non-converged iteration).
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ._io import fmt, write_csv, write_json, write_text
from .evolution import UnstableStepError
from .geometry import Boundary, build_grid, make_kernel, wrap_kernel
from .kpp import Nonlinearity, find_periodic_solution, summarize_scan
from .operator import assemble
from .spectrum import PowerIterationError, principal_spectrum_point
from .validate import DEFAULT_SEED, run_checks
from .weighted_solver import (STATUS_UNIQUE, pe_sufficiency, solve_lambda_p,
                              upper_bound_lambda_p)
from .weights import (DEFAULT_N_TIME, S1Data, WeightExprError, closed_form,
                      load_sampled_csv)

TASKS = ("spectrum", "lambda_p", "upper_bound", "kpp_scan", "validate")

_BOOLEAN = configparser.ConfigParser.BOOLEAN_STATES


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# config access


def _load_config(path: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys and expressions keep their case
    found = cp.read(path)
    if not found:
        raise ConfigError(f"cannot read config file {path!r}")
    return cp


def _section(cp, name, required=True):
    if cp is not None and cp.has_section(name):
        return cp[name]
    if required:
        raise ConfigError(f"config needs a [{name}] section")
    return {}


def _get(sec, key, default=None, required=False):
    raw = sec.get(key)
    if raw is None or str(raw).strip() == "":
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    return str(raw).strip()


def _get_float(sec, key, default=None, required=False):
    raw = _get(sec, key, required=required)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key} = {raw!r} is not a number") from None


def _get_int(sec, key, default=None, required=False):
    raw = _get(sec, key, required=required)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key} = {raw!r} is not an integer") from None


def _get_bool(sec, key, default=False):
    raw = _get(sec, key)
    if raw is None:
        return default
    state = _BOOLEAN.get(raw.lower())
    if state is None:
        raise ConfigError(f"{key} = {raw!r} is not a boolean")
    return state


def _parse_box(raw: str):
    """Axis lengths of the box, e.g. ``1`` (1-D) or ``1, 2`` (2-D)."""
    try:
        lengths = [float(tok) for tok in raw.replace(";", ",").split(",")
                   if tok.strip()]
    except ValueError:
        raise ConfigError(f"box = {raw!r} is not a list of axis lengths") from None
    if not lengths:
        raise ConfigError("box is empty")
    return lengths


def _parse_lambdas(sec):
    raw = _get(sec, "lambdas")
    if raw is not None:
        try:
            values = [float(tok) for tok in raw.replace(";", ",").split(",")
                      if tok.strip()]
        except ValueError:
            raise ConfigError(f"lambdas = {raw!r} is not a number list") from None
        if not values:
            raise ConfigError("lambdas is empty")
        return values
    lo = _get_float(sec, "lambda_min")
    hi = _get_float(sec, "lambda_max")
    count = _get_int(sec, "lambda_count")
    if lo is None or hi is None or count is None:
        raise ConfigError("need either 'lambdas' or lambda_min/lambda_max/lambda_count")
    if count < 1 or hi < lo:
        raise ConfigError("lambda range must have count >= 1 and lambda_max >= lambda_min")
    return [float(v) for v in np.linspace(lo, hi, count)]


def _build_problem(cp, config_dir: Path):
    sec = _section(cp, "problem")
    raw_boundary = _get(sec, "boundary", required=True)
    try:
        boundary = Boundary(raw_boundary.lower())
    except ValueError:
        raise ConfigError(f"unknown boundary {raw_boundary!r}") from None
    box = _parse_box(_get(sec, "box", required=True))
    n_per_axis = _get_int(sec, "n_per_axis", required=True)
    profile = _get(sec, "kernel", required=True)
    radius = _get_float(sec, "support_radius", required=True)
    try:
        grid = build_grid(boundary, box, n_per_axis)
        kernel = make_kernel(profile, radius, dim=len(box))
        if boundary is Boundary.PERIODIC:
            kernel = wrap_kernel(kernel, box)
        op = assemble(kernel, grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    wsec = _section(cp, "weight")
    period = _get_float(wsec, "period", required=True)
    expr = _get(wsec, "expr")
    samples_path = _get(wsec, "samples")
    if (expr is None) == (samples_path is None):
        raise ConfigError("[weight] needs exactly one of 'expr' or 'samples'")
    s1_data = None
    maximizer_raw = _get(wsec, "s1_maximizer")
    if maximizer_raw is not None:
        maximizer = tuple(float(tok) for tok in maximizer_raw.split(",") if tok.strip())
        s1_data = S1Data(
            smoothness=_get_float(wsec, "s1_smoothness", default=math.inf),
            maximizer=maximizer,
            flat_order=_get_int(wsec, "s1_flat_order", default=1),
        )
    try:
        if expr is not None:
            weight = closed_form(expr, period, s1_data=s1_data)
        else:
            path = Path(samples_path)
            if not path.is_absolute():
                path = config_dir / path
            weight = load_sampled_csv(path, period)
            if weight.samples.shape[1] != grid.n:
                raise ConfigError(
                    f"sampled weight has {weight.samples.shape[1]} nodes, "
                    f"grid has {grid.n}")
    except (WeightExprError, ValueError, OSError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return op, weight


def _config_echo(cp):
    if cp is None:
        return {}
    return {name: dict(sorted(cp[name].items())) for name in sorted(cp.sections())}


def _clean(obj):
    """Make a structure JSON-safe: tuples to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else format(v, "g")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _map_ordered(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _resolve_threads(arg):
    if arg is not None:
        value = arg
    else:
        raw = os.environ.get("PERISPEC_THREADS", "").strip()
        if raw:
            try:
                value = int(raw)
            except ValueError:
                raise ConfigError(
                    f"PERISPEC_THREADS = {raw!r} is not an integer") from None
        else:
            value = 1
    if value < 1:
        raise ConfigError("thread count must be >= 1")
    return value


# ---------------------------------------------------------------------------
# serialization of results


def _cond_dict(cond):
    return {
        "p_value": cond.p_value,
        "time_space_integral": cond.time_space_integral,
        "dirichlet_condition_holds": cond.d_holds,
        "mass_conserving_condition_holds": cond.n_holds,
        "p_marginal": cond.p_marginal,
        "integral_marginal": cond.integral_marginal,
        "tol_p": cond.tol_p,
        "tol_integral": cond.tol_integral,
    }


def _root_dict(res):
    return {
        "status": res.status,
        "boundary": res.boundary.value,
        "lambda_p": res.lambda_p,
        "mu_at_root": res.mu_at_root,
        "bracket": list(res.bracket) if res.bracket else None,
        "evidence": res.evidence,
        "conditions": _cond_dict(res.condition_report),
        "curve_points": len(res.curve),
    }


def _pe_dict(pe):
    s = pe.report.s_conditions
    return {
        "is_principal_eigenvalue": pe.is_principal_eigenvalue,
        "basis": pe.basis,
        "mu_n": pe.report.mu_n,
        "residual": pe.report.residual,
        "h_hat_max": pe.report.h_hat_max,
        "spectral_gap": pe.report.mu_n - pe.report.h_hat_max,
        "localization_width": pe.report.localization_width,
        "s1": s.s1, "s2": s.s2, "s3": s.s3,
        "s3_exponent": s.s3_exponent,
    }


def _root_report_lines(res):
    cond = res.condition_report
    lines = [
        f"boundary: {res.boundary.value}",
        f"status: {res.status}",
    ]
    if res.lambda_p is not None:
        lines.append(f"lambda_p: {fmt(res.lambda_p)}")
        lines.append(f"mu at the root: {fmt(res.mu_at_root)}")
    if res.bracket is not None:
        lines.append(f"final bracket: [{fmt(res.bracket[0])}, {fmt(res.bracket[1])}]")
    lines.append(f"accumulated best-case growth P: {fmt(cond.p_value)}")
    lines.append(f"space-time integral of the weight: {fmt(cond.time_space_integral)}")
    holds = cond.holds_for(res.boundary)
    lines.append(f"existence condition for this boundary holds: {fmt(holds)}")
    if cond.marginal_for(res.boundary):
        lines.append("warning: the existence condition is within tolerance of "
                     "its boundary; the verdict is sensitive to quadrature")
    lines.append(f"evidence: {res.evidence}")
    return lines


def _write_curve(path, curve):
    write_csv(path, ["lam", "mu"], list(curve))


# ---------------------------------------------------------------------------
# tasks


def _task_spectrum(cp, op, weight, outdir, threads):
    sec = _section(cp, "spectrum")
    lams = _parse_lambdas(sec)
    n_steps = _get_int(sec, "n_steps")
    n_time = _get_int(sec, "n_time", default=DEFAULT_N_TIME)
    cross = _get_bool(sec, "cross_validate", default=False)

    def one(lam):
        return principal_spectrum_point(op, weight, lam, n_steps=n_steps,
                                        n_time=n_time, cross_validate=cross)

    reports = _map_ordered(one, lams, threads)
    columns = ["lam", "mu_n", "residual", "iterations", "h_hat_min", "h_hat_max",
               "is_principal_eigenvalue", "s1", "s2", "s3", "s3_exponent",
               "localization_width"]
    if cross:
        columns += ["lyapunov_mu", "method_gap"]
    rows = []
    for rep in reports:
        s = rep.s_conditions
        row = [rep.lam, rep.mu_n, rep.residual, rep.iterations, rep.h_hat_min,
               rep.h_hat_max, rep.is_principal_eigenvalue, s.s1, s.s2, s.s3,
               s.s3_exponent, rep.localization_width]
        if cross:
            row += [rep.diagnostics["lyapunov_mu"], rep.diagnostics["method_gap"]]
        rows.append(row)
    write_csv(outdir / "spectrum.csv", columns, rows)

    summary = {
        "task": "spectrum",
        "config": _config_echo(cp),
        "results": [
            {"lam": rep.lam, "mu_n": rep.mu_n, "residual": rep.residual,
             "is_principal_eigenvalue": rep.is_principal_eigenvalue,
             "h_hat_max": rep.h_hat_max,
             "s_conditions": {"s1": rep.s_conditions.s1, "s2": rep.s_conditions.s2,
                              "s3": rep.s_conditions.s3},
             **({"lyapunov_mu": rep.diagnostics["lyapunov_mu"],
                 "method_gap": rep.diagnostics["method_gap"]} if cross else {})}
            for rep in reports],
    }
    write_json(outdir / "summary.json", _clean(summary))

    lines = ["principal spectrum points", ""]
    for rep in reports:
        lines.append(
            f"lam = {fmt(rep.lam)}: mu = {fmt(rep.mu_n)}, envelope max = "
            f"{fmt(rep.h_hat_max)}, principal eigenvalue: {rep.is_principal_eigenvalue}")
    write_text(outdir / "report.txt", "\n".join(lines) + "\n")
    return 0, f"computed {len(reports)} spectrum points"


def _task_lambda_p(cp, op, weight, outdir, threads):
    sec = _section(cp, "lambda_p", required=False)
    res = solve_lambda_p(
        op, weight,
        n_steps=_get_int(sec, "n_steps"),
        n_time=_get_int(sec, "n_time", default=DEFAULT_N_TIME),
        tol_root=_get_float(sec, "tol_root", default=1e-8),
        lam_cap=_get_float(sec, "lam_cap", default=1e6),
        xtol_rel=_get_float(sec, "xtol_rel", default=1e-10),
    )
    pe = None
    if res.status == STATUS_UNIQUE and _get_bool(sec, "check_pe", default=True):
        pe = pe_sufficiency(op, weight, res, n_steps=_get_int(sec, "n_steps"),
                            n_time=_get_int(sec, "n_time", default=DEFAULT_N_TIME))

    _write_curve(outdir / "curve.csv", res.curve)
    summary = {"task": "lambda_p", "config": _config_echo(cp),
               "result": _root_dict(res)}
    if pe is not None:
        summary["principal_eigenvalue"] = _pe_dict(pe)
    write_json(outdir / "summary.json", _clean(summary))

    lines = ["weighted threshold problem", ""] + _root_report_lines(res)
    if pe is not None:
        lines.append(
            f"eigenvalue at the root: {pe.is_principal_eigenvalue}"
            + (f" (certified by {pe.basis})" if pe.basis else ""))
    write_text(outdir / "report.txt", "\n".join(lines) + "\n")
    return 0, f"status {res.status}" + (
        f", lambda_p = {fmt(res.lambda_p)}" if res.lambda_p is not None else "")


def _task_upper_bound(cp, op, weight, outdir, threads):
    sec = _section(cp, "upper_bound", required=False)
    out = upper_bound_lambda_p(
        op, weight,
        n_steps=_get_int(sec, "n_steps"),
        n_time=_get_int(sec, "n_time", default=DEFAULT_N_TIME),
        tol_root=_get_float(sec, "tol_root", default=1e-8),
        lam_cap=_get_float(sec, "lam_cap", default=1e6),
    )
    _write_curve(outdir / "curve_time.csv", out.time_dependent.curve)
    _write_curve(outdir / "curve_averaged.csv", out.averaged.curve)
    summary = {
        "task": "upper_bound",
        "config": _config_echo(cp),
        "time_dependent": _root_dict(out.time_dependent),
        "averaged": _root_dict(out.averaged),
        "bound_holds": out.bound_holds,
        "slack": out.slack,
    }
    write_json(outdir / "summary.json", _clean(summary))

    lines = ["time-averaging upper bound", "", "time-dependent problem:"]
    lines += ["  " + ln for ln in _root_report_lines(out.time_dependent)]
    lines += ["", "time-averaged problem:"]
    lines += ["  " + ln for ln in _root_report_lines(out.averaged)]
    lines.append("")
    if out.bound_holds is None:
        lines.append("bound not applicable: at least one problem has no unique root")
    else:
        lines.append(f"averaged root minus time-dependent root: {fmt(out.slack)}")
        lines.append(f"upper bound holds: {fmt(out.bound_holds)}")
    write_text(outdir / "report.txt", "\n".join(lines) + "\n")
    if out.bound_holds is False:
        return 1, "upper bound violated"
    return 0, "bound " + ("holds" if out.bound_holds else "not applicable")


def _task_kpp_scan(cp, op, weight, outdir, threads):
    sec = _section(cp, "kpp_scan")
    lams = _parse_lambdas(sec)
    try:
        nonlin = Nonlinearity(
            kind=_get(sec, "nonlinearity", default="logistic"),
            crowding=_get_float(sec, "crowding", default=1.0),
            saturation=_get_float(sec, "saturation", default=0.0),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    n_steps = _get_int(sec, "n_steps")
    max_periods = _get_int(sec, "max_periods", default=500)
    check_uniqueness = _get_bool(sec, "check_uniqueness", default=False)

    solver_result = solve_lambda_p(
        op, weight, n_steps=_get_int(sec, "solver_n_steps"),
        n_time=_get_int(sec, "n_time", default=DEFAULT_N_TIME))

    def one(lam):
        return find_periodic_solution(op, weight, nonlin, lam, n_steps=n_steps,
                                      max_periods=max_periods,
                                      check_uniqueness=check_uniqueness)

    orbits = _map_ordered(one, sorted(lams), threads)
    scan = summarize_scan(orbits, solver_result)

    rows = [[o.lam, o.verdict, o.sup_of_orbit, o.min_of_orbit, o.residual,
             o.periods_used,
             math.nan if o.uniqueness_gap is None else o.uniqueness_gap]
            for o in scan.orbits]
    write_csv(outdir / "scan.csv",
              ["lam", "verdict", "sup_of_orbit", "min_of_orbit", "residual",
               "periods_used", "uniqueness_gap"], rows)

    summary = {
        "task": "kpp_scan",
        "config": _config_echo(cp),
        "verdicts": [{"lam": o.lam, "verdict": o.verdict,
                      "periods_used": o.periods_used} for o in scan.orbits],
        "threshold": _root_dict(scan.lambda_result),
        "switch_bracket": list(scan.switch_bracket) if scan.switch_bracket else None,
        "monotone": scan.monotone,
        "consistent_with_root": scan.consistent_with_root,
    }
    write_json(outdir / "summary.json", _clean(summary))

    lines = ["persistence scan", ""]
    for o in scan.orbits:
        lines.append(f"lam = {fmt(o.lam)}: {o.verdict} "
                     f"({o.periods_used} periods)")
    lines.append("")
    lines += _root_report_lines(scan.lambda_result)
    lines.append(f"verdicts monotone in lam: {fmt(scan.monotone)}")
    if scan.switch_bracket is not None:
        lines.append(f"switch bracket: [{fmt(scan.switch_bracket[0])}, "
                     f"{fmt(scan.switch_bracket[1])}]")
    if scan.consistent_with_root is not None:
        lines.append(f"threshold root inside the switch bracket: "
                     f"{fmt(scan.consistent_with_root)}")
    write_text(outdir / "report.txt", "\n".join(lines) + "\n")

    failed = (not scan.monotone) or scan.consistent_with_root is False
    return (1 if failed else 0), (
        "scan inconsistent with the linear threshold" if failed
        else f"{len(scan.orbits)} verdicts, monotone")


def _task_validate(cp, outdir):
    sec = _section(cp, "validate", required=False) if cp is not None else {}
    seed = _get_int(sec, "seed", default=DEFAULT_SEED)
    names_raw = _get(sec, "checks")
    names = None
    if names_raw:
        names = [tok.strip() for tok in names_raw.split(";") if tok.strip()]
    results = run_checks(seed, names)

    rows = [[r.name, r.passed, r.detail.replace(",", ";")] for r in results]
    write_csv(outdir / "checks.csv", ["name", "passed", "detail"], rows)
    summary = {
        "task": "validate",
        "config": _config_echo(cp),
        "seed": seed,
        "passed": sum(r.passed for r in results),
        "failed": sum(not r.passed for r in results),
        "checks": [{"name": r.name, "passed": r.passed, "detail": r.detail}
                   for r in results],
    }
    write_json(outdir / "summary.json", _clean(summary))
    lines = ["self-check battery", ""]
    for r in results:
        lines.append(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
    write_text(outdir / "report.txt", "\n".join(lines) + "\n")
    failed = [r for r in results if not r.passed]
    if failed:
        return 1, f"{len(failed)} of {len(results)} checks failed"
    return 0, f"all {len(results)} checks passed"


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="perispec",
        description="principal spectrum points and persistence thresholds "
                    "for time-periodic nonlocal dispersal")
    parser.add_argument("task", choices=TASKS)
    parser.add_argument("config", nargs="?",
                        help="INI config file (optional for 'validate')")
    parser.add_argument("--output-dir", default=".", help="where to write results")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: PERISPEC_THREADS or 1)")
    parser.add_argument("--verbose", action="store_true",
                        help="echo the report to stdout")
    args = parser.parse_args(argv)

    try:
        threads = _resolve_threads(args.threads)
        outdir = Path(args.output_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        cp = None
        if args.config is not None:
            cp = _load_config(args.config)
        elif args.task != "validate":
            raise ConfigError(f"task {args.task!r} needs a config file")

        if args.task == "validate":
            code, message = _task_validate(cp, outdir)
        else:
            op, weight = _build_problem(cp, Path(args.config).resolve().parent)
            handler = {"spectrum": _task_spectrum, "lambda_p": _task_lambda_p,
                       "upper_bound": _task_upper_bound,
                       "kpp_scan": _task_kpp_scan}[args.task]
            code, message = handler(cp, op, weight, outdir, threads)
    except ConfigError as exc:
        print(f"perispec: config error: {exc}", file=sys.stderr)
        return 2
    except (UnstableStepError, PowerIterationError) as exc:
        print(f"perispec: numerical failure: {exc}", file=sys.stderr)
        return 3

    print(f"perispec {args.task}: {message} (results in {outdir})")
    if args.verbose:
        report = outdir / "report.txt"
        if report.exists():
            print(report.read_text(), end="")
    return code


if __name__ == "__main__":
    sys.exit(main())
