"""Command line interface: ``momentbound bound | sweep | check``.

Exit codes: 0 success, 1 usage or parse error, 2 infeasible or unbounded
relaxation, 3 numerical failure, 4 a ``check`` verdict of FAIL.
"""

import argparse
import copy
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import solver
from .momeq import MomentKey, TruncationOrder
from .netspec import NetworkError, network_from_dict
from .sdpbuild import (BuildError, ScaleRecord, assemble_conic, build_problem, default_scale,
                       export_sdpa, flip_direction, scale_problem)
from .momeq import assemble_moment_equations
from .ssa import (SamplingError, SimConfig, SimulationError, condition_means, paired_samples,
                  rate_equation_mean, sample_correlated_params, truncated_chain_stationary)

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NUMERICAL, EXIT_FAIL = 0, 1, 2, 3, 4
DEFAULT_TOL = 1e-6


class UsageError(Exception):
    pass


@dataclass
class BoundRow:
    r: float
    sigma: int
    rho: int
    direction: str
    value: float
    status: str
    lb: float = math.nan
    ub: float = math.nan
    lb_status: str = ""
    ub_status: str = ""
    gap: float = math.nan
    wall_time: float = 0.0

    def to_json(self):
        d = asdict(self)
        return json.dumps({k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                           for k, v in d.items()}, sort_keys=False)


# -- helpers -----------------------------------------------------------------

def _read_doc(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"syntax error at line {exc.lineno}, column {exc.colno}: "
                           f"{exc.msg}") from None


def _correlation_r(doc):
    for c in doc.get("constraints", []):
        if c.get("type") == "correlation_bound":
            return float(c["r"])
    return None


def with_correlation(doc, r, independent_at_zero=False):
    """Copy of ``doc`` with its correlation bound set to ``r``.

    With ``independent_at_zero`` an r of 0 is read as independence of the two
    parameters (all joint moments factorize) rather than zero correlation.
    """
    doc = copy.deepcopy(doc)
    cons = doc.setdefault("constraints", [])
    idx = [i for i, c in enumerate(cons) if c.get("type") == "correlation_bound"]
    if not idx:
        unc = [p["name"] for p in doc.get("parameters", []) if p.get("kind", "uncertain") != "fixed"]
        if len(unc) != 2:
            raise UsageError("network has no correlation_bound constraint and not exactly "
                             "two uncertain parameters")
        cons.append({"type": "correlation_bound", "params": unc, "r": r})
        idx = [len(cons) - 1]
    if len(idx) > 1:
        raise UsageError("network has more than one correlation_bound constraint")
    c = cons[idx[0]]
    if independent_at_zero and r == 0:
        cons[idx[0]] = {"type": "independent", "params": list(c["params"])}
    else:
        c["r"] = r
    return doc


def parse_target(net, text):
    """``X``, ``X^2`` or ``X*Y`` -> MomentKey of a copy-number moment."""
    alpha = [0] * net.n
    for part in text.replace(" ", "").split("*"):
        name, _, power = part.partition("^")
        try:
            idx = net.species_index(name)
        except (KeyError, ValueError, NetworkError):
            raise UsageError(f"unknown species {name!r} in target {text!r}") from None
        try:
            k = int(power) if power else 1
        except ValueError:
            raise UsageError(f"bad exponent in target {text!r}") from None
        if k < 1:
            raise UsageError(f"bad exponent in target {text!r}")
        alpha[idx] += k
    return MomentKey(tuple(alpha), (0,) * len(net.uncertain))


def _parse_assignments(items, what):
    out = {}
    for item in items or []:
        for piece in item.split(","):
            name, eq, value = piece.partition("=")
            if not eq:
                raise UsageError(f"{what} must look like NAME=VALUE, got {piece!r}")
            try:
                out[name.strip()] = float(value)
            except ValueError:
                raise UsageError(f"{what}: {value!r} is not a number") from None
            if not out[name.strip()] > 0:
                raise UsageError(f"{what}: {name} must be positive")
    return out


def scale_for(net, spec, auto=True):
    """ScaleRecord from NAME=VALUE overrides on top of the automatic choice."""
    if not auto and not spec:
        return None
    base = default_scale(net, rate_equation_mean(net)) if auto else ScaleRecord.ones(
        net.n, len(net.uncertain))
    cx, ck = list(base.C_X), list(base.C_K)
    for name, v in spec.items():
        if name in net.species_names:
            cx[net.species_names.index(name)] = v
        elif name in net.uncertain_names:
            ck[net.uncertain_names.index(name)] = v
        else:
            raise UsageError(f"--scale: {name} is neither a species nor an uncertain parameter")
    return ScaleRecord(tuple(cx), tuple(ck))


def solve_bounds(net, target, t, directions, scale, settings, prune=True):
    """Solve the requested directions; returns ``{direction: Solution}``."""
    p = build_problem(net, t, target, "min", scale=scale, prune=prune)
    out = {}
    for d in directions:
        out[d] = solver.solve(p if d == "min" else flip_direction(p), settings)
    return out


def _status_exit(statuses):
    if all(s == solver.OPTIMAL for s in statuses):
        return EXIT_OK
    if any(s in (solver.PRIMAL_INFEASIBLE, solver.DUAL_INFEASIBLE) for s in statuses):
        return EXIT_INFEASIBLE
    return EXIT_NUMERICAL


def _row(r, sigma, rho, direction, sols, seconds):
    lo, hi = sols.get("min"), sols.get("max")
    row = BoundRow(r, sigma, rho, direction, math.nan, "", wall_time=round(seconds, 3))
    if lo is not None:
        row.lb, row.lb_status = lo.value, lo.status
    if hi is not None:
        row.ub, row.ub_status = hi.value, hi.status
    if direction == "both":
        row.gap = row.ub - row.lb
        statuses = [lo.status, hi.status]
        row.status = solver.OPTIMAL if all(s == solver.OPTIMAL for s in statuses) else \
            next(s for s in statuses if s != solver.OPTIMAL)
    else:
        sol = sols[direction]
        row.value, row.status = sol.value, sol.status
    return row


def _settings(args):
    return solver.SolverSettings(tol_gap=args.tol, tol_feas=args.tol, max_iters=args.max_iters)


# -- commands ----------------------------------------------------------------

def cmd_bound(args, out=sys.stdout):
    doc = _read_doc(args.network)
    if args.r is not None:
        doc = with_correlation(doc, args.r, args.independent_at_zero)
    net = network_from_dict(doc)
    target = parse_target(net, args.target)
    t = TruncationOrder(args.rho, args.sigma)
    scale = scale_for(net, _parse_assignments(args.scale, "--scale"), auto=not args.no_scale)
    if args.export_sdpa:
        p = assemble_conic(assemble_moment_equations(net, t), net, target, "min")
        if scale is not None:
            p = scale_problem(p, scale)
        with open(args.export_sdpa, "w", encoding="utf-8") as fh:
            fh.write(export_sdpa(p))
    dirs = ["min", "max"] if args.direction == "both" else [args.direction]
    t0 = time.perf_counter()
    sols = solve_bounds(net, target, t, dirs, scale, _settings(args), prune=not args.no_prune)
    row = _row(_correlation_r(doc), args.sigma, args.rho, args.direction, sols,
               time.perf_counter() - t0)
    out.write(row.to_json() + "\n")
    for d, s in sols.items():
        if s.status != solver.OPTIMAL:
            print(f"{d}: {s.status}: {s.message}", file=sys.stderr)
    return _status_exit([s.status for s in sols.values()])


def _parse_sigma_range(text):
    try:
        if ".." in text:
            a, b = text.split("..")
            lo, hi = int(a), int(b)
        else:
            lo = hi = int(text)
    except ValueError:
        raise UsageError(f"--sigma must be N or A..B, got {text!r}") from None
    if lo < 0 or hi < lo:
        raise UsageError(f"bad sigma range {text!r}")
    return list(range(lo, hi + 1))


def _parse_r_values(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--r must be a comma separated list, got {text!r}") from None
    if not vals:
        raise UsageError("--r needs at least one value")
    for v in vals:
        if not 0 <= v <= 1:
            raise UsageError(f"correlation bound {v} outside [0, 1]")
    return vals


def _sweep_cell(job):
    doc, r, sigma, rho, target_text, scale_spec, auto_scale, tol, max_iters, prune, indep = job
    t0 = time.perf_counter()
    d = with_correlation(doc, r, indep)
    net = network_from_dict(d)
    target = parse_target(net, target_text)
    scale = scale_for(net, scale_spec, auto=auto_scale)
    settings = solver.SolverSettings(tol_gap=tol, tol_feas=tol, max_iters=max_iters)
    try:
        sols = solve_bounds(net, target, TruncationOrder(rho, sigma), ["min", "max"], scale,
                            settings, prune)
        lo, hi = sols["min"], sols["max"]
        return (r, sigma, lo.value, hi.value, lo.status, hi.status, time.perf_counter() - t0)
    except (BuildError, ArithmeticError, ValueError) as exc:
        return (r, sigma, math.nan, math.nan, f"error: {exc}", f"error: {exc}",
                time.perf_counter() - t0)


def _default_jobs():
    try:
        return max(1, int(os.environ.get("MOMENTBOUND_JOBS", "1")))
    except ValueError:
        return 1


def _fmt(v):
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def run_sweep(doc, r_values, sigmas, rho, target, scale_spec=None, auto_scale=True,
              tol=DEFAULT_TOL, max_iters=200, prune=True, independent_at_zero=True, jobs=1):
    """Solve every (r, sigma) cell; rows come back in (r, sigma) order."""
    jobs_list = [(doc, r, s, rho, target, scale_spec or {}, auto_scale, tol, max_iters, prune,
                  independent_at_zero) for r in r_values for s in sigmas]
    if jobs > 1 and len(jobs_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_sweep_cell, jobs_list))
    return [_sweep_cell(j) for j in jobs_list]


def sweep_csv(rows, timing=True):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "sigma", "lb", "ub", "gap", "lb_status", "ub_status", "seconds"])
    for r, s, lb, ub, ls, us, sec in rows:
        gap = ub - lb if (ls == solver.OPTIMAL and us == solver.OPTIMAL) else math.nan
        w.writerow([_fmt(r), s, _fmt(lb), _fmt(ub), _fmt(gap), ls, us,
                    f"{sec:.3f}" if timing else "0"])
    return buf.getvalue()


def cmd_sweep(args, out=sys.stdout):
    doc = _read_doc(args.network)
    net = network_from_dict(doc)
    parse_target(net, args.target)
    r_values = _parse_r_values(args.r) if args.r else [_correlation_r(doc)]
    if r_values == [None]:
        raise UsageError("network has no correlation_bound; pass --r")
    sigmas = _parse_sigma_range(args.sigma)
    scale_spec = _parse_assignments(args.scale, "--scale")
    jobs = args.jobs if args.jobs is not None else _default_jobs()
    if jobs < 1:
        raise UsageError("--jobs must be at least 1")
    rows = run_sweep(doc, r_values, sigmas, args.rho, args.target, scale_spec, not args.no_scale,
                     args.tol, args.max_iters, not args.no_prune, args.independent_at_zero, jobs)
    out.write(sweep_csv(rows, timing=not args.no_timing))
    return EXIT_OK


def check_fixed(net, values, target, t, scale_spec, auto_scale, settings, n_max=400):
    """Oracle mode: truncated-chain mean against the bounds at fixed parameters."""
    fixed = net.with_fixed(values)
    if fixed.uncertain:
        raise UsageError(f"no value given for {fixed.uncertain_names}")
    scale = scale_for(fixed, scale_spec, auto=auto_scale)
    sols = solve_bounds(fixed, MomentKey(target.alpha, ()), t, ["min", "max"], scale, settings)
    k = fixed.rates_vector()
    mean, tail = truncated_chain_stationary(fixed, k, n_max)
    if fixed.n > 1:
        raise UsageError("oracle mode supports single-species networks only")
    if tail > 1e-8:
        raise SimulationError(f"oracle tail mass {tail:.3g} above 1e-8; increase --n-max")
    power = sum(target.alpha)
    if power != 1:
        raise UsageError("oracle mode checks the mean (target X)")
    lb, ub = sols["min"].value, sols["max"].value
    eps = 1e-6
    ok = (sols["min"].optimal and sols["max"].optimal and lb - eps <= mean <= ub + eps)
    return {"mode": "oracle", "verdict": "PASS" if ok else "FAIL", "values": values,
            "lb": lb, "ub": ub, "lb_status": sols["min"].status, "ub_status": sols["max"].status,
            "eps": eps, "oracle_mean": mean, "tail_mass": tail}, sols


def check_protocol(net, doc, r, signs, target, t, cfg, scale_spec, auto_scale, settings):
    """SSA mode: empirical interval of the sampling protocol against the bounds."""
    unc = net.uncertain
    if len(unc) != 2 or any(p.gamma is None for p in unc):
        raise UsageError("the sampling protocol needs exactly two uncertain gamma parameters")
    scale = scale_for(net, scale_spec, auto=auto_scale)
    sols = solve_bounds(net, target, t, ["min", "max"], scale, settings)
    lb, ub = sols["min"].value, sols["max"].value
    species = int(np.flatnonzero(target.alpha)[0])
    conditions, info = [], []
    for i, sign in enumerate(signs):
        pairs = sample_correlated_params((unc[0].gamma.shape, unc[0].gamma.scale),
                                         (unc[1].gamma.shape, unc[1].gamma.scale),
                                         r, sign, cfg.n_cells, seed=cfg.seed + 7919 * (i + 1))
        conditions.append(paired_samples(net, [unc[0].name, unc[1].name], pairs))
        info.append({"sign": sign, "corr": float(np.corrcoef(pairs.T)[0, 1])})
    cms = condition_means(net, conditions, cfg, species)
    for d, cm in zip(info, cms):
        d.update(mean=cm.mean, stderr=cm.stderr, mean_at_half_time=cm.mid_mean)
    lo, hi = min(c.mean for c in cms), max(c.mean for c in cms)
    eps = max(1e-6, 3 * max(c.stderr for c in cms))
    ok = (sols["min"].optimal and sols["max"].optimal and lb - eps <= lo and hi <= ub + eps)
    return {"mode": "ssa", "verdict": "PASS" if ok else "FAIL", "r": r, "cells": cfg.n_cells,
            "seed": cfg.seed, "t_end": cfg.t_end, "lb": lb, "ub": ub,
            "lb_status": sols["min"].status, "ub_status": sols["max"].status, "eps": eps,
            "interval": [lo, hi], "conditions": info}, sols


def cmd_check(args, out=sys.stdout):
    doc = _read_doc(args.network)
    if args.r is not None and not 0 <= args.r <= 1:
        raise UsageError(f"--r {args.r} outside [0, 1]")
    values = _parse_assignments(args.values, "--values")
    scale_spec = _parse_assignments(args.scale, "--scale")
    settings = _settings(args)
    t = TruncationOrder(args.rho, args.sigma)
    net = network_from_dict(doc)
    target = parse_target(net, args.target)
    if values or not net.uncertain:
        verdict, sols = check_fixed(net, values, target, t, scale_spec, not args.no_scale,
                                    settings, args.n_max)
    else:
        r = args.r if args.r is not None else _correlation_r(doc)
        if r is None:
            raise UsageError("no correlation bound in the network; pass --r")
        doc = with_correlation(doc, r)
        net = network_from_dict(doc)
        signs = ["positive", "negative"] if args.sign == "both" else [args.sign]
        cfg = SimConfig(t_end=args.t_end, n_cells=args.cells, seed=args.seed)
        verdict, sols = check_protocol(net, doc, r, signs, target, t, cfg, scale_spec,
                                       not args.no_scale, settings)
    out.write(json.dumps(verdict) + "\n")
    code = _status_exit([s.status for s in sols.values()])
    if code != EXIT_OK:
        return code
    return EXIT_OK if verdict["verdict"] == "PASS" else EXIT_FAIL


# -- argument parsing --------------------------------------------------------

def _common(p, sigma_type=int):
    p.add_argument("network", help="network JSON file")
    p.add_argument("--target", required=True, help="copy-number moment, e.g. X or X^2")
    p.add_argument("--rho", type=int, default=5, help="species truncation order")
    p.add_argument("--sigma", type=sigma_type, default=1, help="parameter truncation order")
    p.add_argument("--scale", action="append", metavar="NAME=VALUE",
                   help="scale constant for a species or uncertain parameter (repeatable)")
    p.add_argument("--no-scale", action="store_true", help="solve the unscaled problem")
    p.add_argument("--no-prune", action="store_true",
                   help="keep moment-matrix rows whose diagonal is otherwise unused")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="solver gap/feasibility tolerance")
    p.add_argument("--max-iters", type=int, default=200)


def build_parser():
    ap = argparse.ArgumentParser(prog="momentbound",
                                 description="SDP bounds on stationary moments of reaction "
                                             "networks with uncertain parameters.")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bound", help="bound one moment")
    _common(b)
    b.add_argument("--direction", choices=["min", "max", "both"], default="both")
    b.add_argument("--r", type=float, help="override the correlation bound of the network")
    b.add_argument("--independent-at-zero", action="store_true",
                   help="with --r 0, treat the parameters as independent")
    b.add_argument("--export-sdpa", metavar="PATH", help="also write the problem in SDPA format")

    s = sub.add_parser("sweep", help="bounds over a grid of r and sigma (CSV)")
    _common(s, sigma_type=str)
    s.add_argument("--r", help="comma separated correlation bounds (default: from the file)")
    s.add_argument("--jobs", type=int, default=None,
                   help="parallel workers (default: $MOMENTBOUND_JOBS or 1)")
    s.add_argument("--independent-at-zero", dest="independent_at_zero", action="store_true",
                   default=True, help="treat r = 0 as independence (default)")
    s.add_argument("--correlation-at-zero", dest="independent_at_zero", action="store_false",
                   help="treat r = 0 as zero correlation only")
    s.add_argument("--no-timing", action="store_true",
                   help="write 0 in the seconds column for byte-identical output")

    c = sub.add_parser("check", help="compare bounds with simulation or an exact oracle")
    _common(c)
    c.add_argument("--r", type=float, help="correlation bound for the sampling protocol")
    c.add_argument("--sign", choices=["positive", "negative", "both"], default="both")
    c.add_argument("--cells", type=int, default=100000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--t-end", type=float, default=1440.0)
    c.add_argument("--values", action="append", metavar="NAME=VALUE",
                   help="fix uncertain parameters and use the truncated-chain oracle")
    c.add_argument("--n-max", type=int, default=400, help="state cap of the oracle")
    return ap


COMMANDS = {"bound": cmd_bound, "sweep": cmd_sweep, "check": cmd_check}


def main(argv=None, out=None):
    out = out or sys.stdout
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.command](args, out)
    except (UsageError, NetworkError, BuildError, ValueError) as exc:
        print(f"momentbound {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SimulationError, SamplingError, ArithmeticError) as exc:
        print(f"momentbound {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
