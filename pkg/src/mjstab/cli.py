"""Command-line frontend.

Subcommands: analyze (scalable certificate), brute (desk-scale vertex
tests plus chain consistency), simulate (seeded Monte Carlo), fit
(minimal-interval search for a measured TPM) and geometry (hull
diagnostics).  Structured results go to stdout or --json-out as JSON,
bulk series to --csv-out as CSV; timings are logged to stderr so that
identical inputs produce byte-identical outputs.

Exit codes: 0 feasible/success, 1 infeasible/unstable, 2 unknown,
64 input error, 65 cap exceeded.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from .errors import (
    DegenerateInterval,
    DisconnectedGraph,
    InputError,
    MjstabError,
    ModeCapExceeded,
    ParameterOutOfRange,
    SizeCapExceeded,
)
from .fitting import fit_feasible, minimal_interval
from .geometry import (
    Interval,
    Membership,
    barycentric_coordinates,
    product_vector,
    simplex_membership,
    tpm_membership,
    vertex_matrix,
    vertex_matrix_determinant,
)
from .graphs import spectrum
from .mjls import assemble_modes, monte_carlo
from .sdp import default_margin
from .serialize import (
    REPORT_SCHEMA,
    ProblemFile,
    certificate_to_doc,
    dump_json,
    load_certificate,
    load_problem,
    read_tpm_csv,
    trajectory_csv,
)
from .stability import (
    decomposed_vertex_test,
    scalable_stability_test,
    verify_certificate,
    vertex_tpm_test,
)

log = logging.getLogger("mjstab")

EX_FEASIBLE = 0
EX_INFEASIBLE = 1
EX_UNKNOWN = 2
EX_INPUT = 64
EX_CAP = 65

_VERDICT_EXIT = {"feasible": EX_FEASIBLE, "infeasible": EX_INFEASIBLE, "unknown": EX_UNKNOWN}


def _emit(doc: dict, json_out: str | None):
    text = dump_json(doc)
    if json_out:
        with open(json_out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _problem_eps(problem: ProblemFile, override: float | None) -> float:
    if override is not None:
        return override
    if problem.options.eps is not None:
        return problem.options.eps
    return default_margin(problem.dynamics.ad, problem.dynamics.ac)


def cmd_analyze(args) -> int:
    problem = load_problem(args.input)
    spec = spectrum(problem.graph, require_connected=True)
    eps = _problem_eps(problem, args.eps)
    include_nominal = problem.mode != "consensus"

    if args.verify_only:
        cert = load_certificate(args.verify_only)
        report = verify_certificate(cert, problem.dynamics, (spec.lambda2, spec.lambdaN))
        doc = {
            "schema": REPORT_SCHEMA,
            "command": "analyze",
            "verdict": "verified" if report.passed else "failed",
            "margins": report.margins,
            "required_margin": report.required_margin,
        }
        _emit(doc, args.json_out)
        return EX_FEASIBLE if report.passed else EX_INFEASIBLE

    start = time.perf_counter()
    outcome, cert = scalable_stability_test(
        problem.dynamics, spec.lambda2, spec.lambdaN, problem.interval,
        eps, include_nominal=include_nominal,
    )
    log.info("analyze solve took %.3fs", time.perf_counter() - start)

    doc = {
        "schema": REPORT_SCHEMA,
        "command": "analyze",
        "verdict": outcome.status,
        "lambda2": spec.lambda2,
        "lambdaN": spec.lambdaN,
        "eps": eps,
        "certificate": None,
        "margins": None,
    }
    if outcome.status == "unknown":
        doc["reason"] = outcome.reason
    if cert is not None:
        report = verify_certificate(cert, problem.dynamics)
        doc["certificate"] = certificate_to_doc(cert)
        doc["margins"] = report.margins
        if not report.passed:
            doc["verdict"] = "unknown"
            doc["reason"] = "certificate failed independent recheck"
            _emit(doc, args.json_out)
            return EX_UNKNOWN
    _emit(doc, args.json_out)
    return _VERDICT_EXIT[outcome.status]


def cmd_brute(args) -> int:
    problem = load_problem(args.input)
    spec = spectrum(problem.graph, require_connected=True)
    eps = _problem_eps(problem, args.eps)
    consensus = problem.mode == "consensus"

    ms = assemble_modes(problem.graph, problem.dynamics)
    start = time.perf_counter()
    vertex = vertex_tpm_test(ms, problem.interval, eps, consensus=consensus)
    decomposed = decomposed_vertex_test(
        problem.graph, problem.dynamics, problem.interval, eps, consensus=consensus
    )
    scalable, _ = scalable_stability_test(
        problem.dynamics, spec.lambda2, spec.lambdaN, problem.interval,
        eps, include_nominal=not consensus,
    )
    log.info("brute solves took %.3fs", time.perf_counter() - start)

    # Sufficiency chain: scalable => decomposed => vertex.  A stronger test
    # reporting feasible while a weaker one reports infeasible is a defect.
    chain_ok = True
    order = [scalable.status, decomposed.status, vertex.status]
    for strong, weak in zip(order, order[1:]):
        if strong == "feasible" and weak == "infeasible":
            chain_ok = False

    doc = {
        "schema": REPORT_SCHEMA,
        "command": "brute",
        "vertex_test": vertex.status,
        "decomposed_test": decomposed.status,
        "scalable_test": scalable.status,
        "chain_consistent": chain_ok,
    }
    _emit(doc, args.json_out)
    return _VERDICT_EXIT[vertex.status]


def cmd_simulate(args) -> int:
    problem = load_problem(args.input)
    tpm_path = args.tpm or problem.tpm_path
    if tpm_path is None:
        raise InputError("simulate needs a TPM: pass --tpm or set 'tpm' in the problem file")
    tpm = read_tpm_csv(tpm_path)
    if tpm.m != problem.graph.m:
        raise InputError(
            f"TPM is for {tpm.m} links but the graph has {problem.graph.m}"
        )
    opts = problem.options
    seed = opts.seed if args.seed is None else args.seed
    trials = opts.trials if args.trials is None else args.trials
    horizon = opts.horizon if args.horizon is None else args.horizon

    ms = assemble_modes(problem.graph, problem.dynamics)
    if opts.x0 is not None:
        x0 = np.asarray(opts.x0, dtype=float)
        if x0.size != ms.dim:
            raise InputError(f"x0 has length {x0.size}, expected {ms.dim}")
    else:
        # documented default: standard normal draw from the run seed
        key = np.array([seed & 0xFFFFFFFFFFFFFFFF, 2**63], dtype=np.uint64)
        x0 = np.random.Generator(np.random.Philox(key=key)).standard_normal(ms.dim)

    start = time.perf_counter()
    stats = monte_carlo(
        ms, tpm, x0, sigma0=opts.sigma0, horizon=horizon, trials=trials, seed=seed
    )
    log.info("simulate took %.3fs", time.perf_counter() - start)

    csv_text = trajectory_csv(stats)
    if args.csv_out:
        with open(args.csv_out, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
    doc = {
        "schema": REPORT_SCHEMA,
        "command": "simulate",
        "trials": stats.trials,
        "horizon": stats.horizon,
        "seed": stats.seed,
        "initial_mean_sq": float(stats.mean_sq[0]),
        "final_mean_sq": float(stats.mean_sq[-1]),
        "unstable": stats.unstable,
    }
    _emit(doc, args.json_out)
    if not args.csv_out and not args.json_out:
        sys.stdout.write(csv_text)
    return EX_INFEASIBLE if stats.unstable else EX_FEASIBLE


def cmd_fit(args) -> int:
    tpm = read_tpm_csv(args.tpm)
    tol = args.tol if args.tol is not None else 1e-3
    start = time.perf_counter()
    result = minimal_interval(tpm, tol_width=tol)
    log.info("fit took %.3fs (%d candidate evaluations)", time.perf_counter() - start,
             len(result.trace))
    final = fit_feasible(tpm, result.interval)
    doc = {
        "schema": REPORT_SCHEMA,
        "command": "fit",
        "rho_l": result.interval.rho_l,
        "rho_u": result.interval.rho_u,
        "width": result.width,
        "feasible": final.feasible,
        "residual": final.residual,
    }
    if args.trace:
        doc["trace"] = [
            {"rho_l": lo, "rho_u": hi, "feasible": ok} for lo, hi, ok in result.trace
        ]
    _emit(doc, args.json_out)
    return EX_FEASIBLE


def cmd_geometry(args) -> int:
    if args.m < 1:
        raise InputError("geometry needs m >= 1")
    iv = Interval(args.rho_l, args.rho_u)
    doc = {
        "schema": REPORT_SCHEMA,
        "command": "geometry",
        "m": args.m,
        "interval": {"rho_l": iv.rho_l, "rho_u": iv.rho_u},
        "det_reference": vertex_matrix_determinant(args.m, iv),
    }
    mat = vertex_matrix(args.m, iv)
    doc["det"] = float(np.linalg.det(mat))

    if args.p is not None:
        p = np.array([float(v) for v in args.p.split(",")])
        if p.size != args.m:
            raise InputError(f"--p needs {args.m} entries, got {p.size}")
        t = product_vector(p)
        doc["product_vector"] = [float(v) for v in t]
        if not iv.degenerate:
            doc["product_vector_membership"] = simplex_membership(t, iv).value

    if args.t is not None:
        t = np.array([float(v) for v in args.t.split(",")])
        if t.size != 1 << args.m:
            raise InputError(f"--t needs {1 << args.m} entries, got {t.size}")
        if iv.degenerate:
            raise DegenerateInterval("barycentric coordinates need rho_l < rho_u")
        lam = barycentric_coordinates(t, iv)
        doc["barycentric"] = [float(v) for v in lam]
        doc["membership"] = simplex_membership(t, iv).value

    if args.tpm is not None:
        tpm = read_tpm_csv(args.tpm)
        if tpm.m != args.m:
            raise InputError(f"TPM is for {tpm.m} links, --m says {args.m}")
        per_row, agg = tpm_membership(tpm, iv)
        doc["tpm_membership"] = {
            "rows": [v.value for v in per_row],
            "aggregate": agg.value,
        }

    if args.csv_out:
        lines = []
        for r in range(mat.shape[1]):
            lines.append(",".join(f"{v!r}" for v in mat[:, r]))
        if args.surface_samples and args.m == 2:
            grid = np.linspace(iv.rho_l, iv.rho_u, args.surface_samples)
            for p1 in grid:
                for p2 in grid:
                    t = product_vector([p1, p2])
                    lines.append(",".join(f"{v!r}" for v in t))
        with open(args.csv_out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    _emit(doc, args.json_out)
    return EX_FEASIBLE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mjstab",
        description="Mean-square stability certification under correlated packet loss",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log timings to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="run the scalable stability certificate")
    pa.add_argument("--input", required=True, help="problem file (JSON)")
    pa.add_argument("--eps", type=float, default=None, help="strictness margin override")
    pa.add_argument("--json-out", default=None)
    pa.add_argument("--verify-only", default=None, metavar="CERT",
                    help="verify an existing certificate instead of solving")
    pa.set_defaults(func=cmd_analyze)

    pb = sub.add_parser("brute", help="desk-scale vertex tests plus chain consistency")
    pb.add_argument("--input", required=True)
    pb.add_argument("--eps", type=float, default=None)
    pb.add_argument("--json-out", default=None)
    pb.set_defaults(func=cmd_brute)

    ps = sub.add_parser("simulate", help="seeded Monte Carlo simulation")
    ps.add_argument("--input", required=True)
    ps.add_argument("--tpm", default=None, help="TPM CSV (overrides the problem file)")
    ps.add_argument("--seed", type=int, default=None)
    ps.add_argument("--trials", type=int, default=None)
    ps.add_argument("--horizon", type=int, default=None)
    ps.add_argument("--csv-out", default=None)
    ps.add_argument("--json-out", default=None)
    ps.set_defaults(func=cmd_simulate)

    pf = sub.add_parser("fit", help="minimal interval containing a measured TPM")
    pf.add_argument("--tpm", required=True, help="TPM CSV, square with 2^m columns")
    pf.add_argument("--tol", type=float, default=None, help="width tolerance (default 1e-3)")
    pf.add_argument("--trace", action="store_true", help="include the search trace")
    pf.add_argument("--json-out", default=None)
    pf.set_defaults(func=cmd_fit)

    pg = sub.add_parser("geometry", help="hull membership and vertex diagnostics")
    pg.add_argument("--m", type=int, required=True, help="number of links")
    pg.add_argument("--rho-l", type=float, required=True, dest="rho_l")
    pg.add_argument("--rho-u", type=float, required=True, dest="rho_u")
    pg.add_argument("--p", default=None, help="per-link success probabilities, comma separated")
    pg.add_argument("--t", default=None, help="mode distribution to classify, comma separated")
    pg.add_argument("--tpm", default=None, help="TPM CSV to classify row-wise")
    pg.add_argument("--csv-out", default=None, help="write vertex columns (and surface samples)")
    pg.add_argument("--surface-samples", type=int, default=0)
    pg.add_argument("--json-out", default=None)
    pg.set_defaults(func=cmd_geometry)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ModeCapExceeded, SizeCapExceeded) as exc:
        log.error("%s", exc)
        return EX_CAP
    except (InputError, DisconnectedGraph, DegenerateInterval, ParameterOutOfRange) as exc:
        log.error("%s", exc)
        return EX_INPUT
    except MjstabError as exc:
        log.error("%s", exc)
        return EX_INPUT
    except ValueError as exc:
        log.error("%s", exc)
        return EX_INPUT


def entrypoint():
    sys.exit(main())
