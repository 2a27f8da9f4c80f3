"""Command-line front end: reproducible solves, sweeps, fits and checks.

Subcommands: ``basis``, ``target``, ``solve``, ``sweep``, ``estimate``,
``fit``, ``verify``.  Scalar results are written as JSON records, bulk
numeric series as CSV.  Every record carries a sha256 hash of the
canonical (sorted, compact) JSON encoding of the invocation's
configuration together with the basis ordering version, so each output
file can be traced back to the exact inputs that produced it.  Times
are serialized in units of the hardest two-qubit gate time; the unit
itself is recorded in every record.

Exit codes: 0 success (for ``solve``: converged), 1 invalid
configuration or missing input, 2 solver finished without converging,
3 not enough usable data inside the fit window.

Environment overrides (the only two honored): ``QTIMEOPT_OUTPUT_ROOT``
sets the default output directory, ``QTIMEOPT_JOBS`` the default
worker count for sweeps.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .diagnostics import (
    costate_commutator_residual,
    graded_residual,
    lambda_constancy,
    one_qubit_constancy,
    time_reversal_residual,
)
from .exceptions import FitConvergenceError, InsufficientDataError
from .fitting import DEFAULT_WINDOW, fit_exp2, fit_linear, fit_power, estimate_time_complexity
from .krotov import ConvergenceCriteria, evaluate_field, solve
from .pauli import BASIS_ORDERING_VERSION, enumerate_basis
from .propagation import ControlField, TimeGrid, default_slices
from .sweep import SweepPlan, run_sweep, write_envelope_csv
from .targets import qft_gate_sequence, sequence_time_cost, target_by_name
from .units import OMEGA, T2MAX

__all__ = ["main", "build_parser", "config_hash", "canonical_json"]

EXIT_OK = 0
EXIT_BAD_CONFIG = 1
EXIT_NOT_CONVERGED = 2
EXIT_INSUFFICIENT_DATA = 3

DEFAULT_CHECKS = ("lambda", "onequbit", "timereversal", "costate", "graded")


def canonical_json(obj) -> str:
    """Sorted, compact, ASCII-safe encoding used for hashing configs."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode("ascii")).hexdigest()[:16]


def _provenance(config: dict) -> dict:
    return {
        "config_hash": config_hash(config),
        "basis_ordering_version": BASIS_ORDERING_VERSION,
        "t2max": T2MAX,
    }


def _output_root(explicit: str | None) -> Path:
    if explicit is not None:
        return Path(explicit)
    return Path(os.environ.get("QTIMEOPT_OUTPUT_ROOT", "runs"))


def _default_jobs() -> int:
    raw = os.environ.get("QTIMEOPT_JOBS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_BAD_CONFIG


def _emit(record: dict, out: str | None) -> None:
    text = json.dumps(record, indent=1, sort_keys=True) + "\n"
    if out is not None:
        Path(out).write_text(text)
    sys.stdout.write(text)


def _parse_window(spec: str | None) -> tuple[float, float] | None:
    if spec is None:
        return None
    lo, sep, hi = spec.partition(":")
    if not sep:
        raise ValueError("window must be LO:HI, e.g. 0.002:0.01")
    lo_f, hi_f = float(lo), float(hi)
    if not (0.0 <= lo_f < hi_f):
        raise ValueError("window bounds must satisfy 0 <= LO < HI")
    return lo_f, hi_f


def _read_xy_csv(path: Path) -> list[tuple[float, float]]:
    """First two numeric columns of a CSV; '#' comments and one optional
    header row are skipped."""
    points = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                points.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                if points:
                    raise ValueError(f"malformed CSV row: {row!r}")
                # tolerate a single leading header row
    return points


def _read_envelope_csv(path: Path) -> list[tuple[float, float, bool]]:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if row[0] == "t_over_t2max":
                continue
            rows.append((float(row[0]), float(row[1]), bool(int(row[3]))))
    return rows


# -- basis ------------------------------------------------------------------


def cmd_basis(args) -> int:
    try:
        basis = enumerate_basis(args.n)
    except ValueError as exc:
        return _fail(str(exc))
    rows = [
        {
            "index": i,
            "label": label,
            "weight": int(basis.weight[i]),
            "parity": basis.parity[i],
        }
        for i, label in enumerate(basis.labels())
    ]
    if args.json:
        record = {
            "kind": "basis",
            "n": args.n,
            "size": basis.size,
            "basis_ordering_version": BASIS_ORDERING_VERSION,
            "generators": rows,
        }
        _emit(record, None)
    else:
        print(f"n={args.n} size={basis.size} ordering={BASIS_ORDERING_VERSION}")
        for r in rows:
            print(f"{r['index']:4d}  {r['label']:<12s} weight={r['weight']} {r['parity']}")
    return EXIT_OK


# -- target -----------------------------------------------------------------


def cmd_target(args) -> int:
    try:
        tgt = target_by_name(args.name, args.n)
    except ValueError as exc:
        return _fail(str(exc))
    record = {
        "kind": "target",
        "name": args.name,
        "n": args.n,
        "dim": tgt.dim,
        "label": tgt.label,
        "basis_ordering_version": BASIS_ORDERING_VERSION,
        "t2max": T2MAX,
    }
    if args.gates:
        if args.name != "qft":
            return _fail("gate sequences are only defined for the qft target")
        seq = qft_gate_sequence(args.n)
        record["gates"] = [g.to_json() for g in seq]
        record["gate_count"] = len(seq)
        record["sequence_time_over_t2max"] = sequence_time_cost(seq) / T2MAX
    if args.dump_matrix is not None:
        path = Path(args.dump_matrix)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in tgt.matrix:
                writer.writerow([repr(complex(v)) for v in row])
        record["matrix_csv"] = str(path)
    _emit(record, None)
    return EXIT_OK


# -- solve ------------------------------------------------------------------


def _criteria_from_args(args) -> ConvergenceCriteria:
    return ConvergenceCriteria(
        max_cycles=args.max_cycles,
        fidelity_tol=args.ftol,
        lambda_tol=args.lambda_tol,
        window=args.window,
    )


def cmd_solve(args) -> int:
    try:
        tgt = target_by_name(args.target, args.n)
    except ValueError as exc:
        return _fail(str(exc))
    if args.t <= 0:
        return _fail("--t must be positive (units of t2max)")
    t_abs = args.t * T2MAX
    slices = args.slices if args.slices is not None else default_slices(t_abs)
    if slices < 1:
        return _fail("--slices must be at least 1")
    criteria = _criteria_from_args(args)
    config = {
        "cmd": "solve",
        "target": args.target,
        "n": args.n,
        "t_over_t2max": args.t,
        "slices": slices,
        "seed": args.seed,
        "omega": OMEGA,
        "criteria": {
            "max_cycles": criteria.max_cycles,
            "fidelity_tol": criteria.fidelity_tol,
            "lambda_tol": criteria.lambda_tol,
            "window": criteria.window,
        },
    }
    digest = config_hash(config)
    root = _output_root(args.out)
    root.mkdir(parents=True, exist_ok=True)

    basis = enumerate_basis(args.n)
    result = solve(
        tgt.matrix, TimeGrid(t_abs, slices), basis, seed=args.seed, criteria=criteria
    )

    field_base = root / f"solve-{digest}-field"
    csv_path, meta_path = result.state.field.save(field_base, args.n)
    meta = json.loads(meta_path.read_text())
    meta.update(_provenance(config))
    meta_path.write_text(json.dumps(meta, indent=1, sort_keys=True))

    lam = result.state.lambda_record
    lam_mean = float(np.mean(lam))
    lam_rel = float(np.std(lam) / abs(lam_mean)) if abs(lam_mean) > 0 else math.inf
    violations = [r for r in result.reports if r.violation]
    record = {
        "kind": "solve",
        "config": config,
        **_provenance(config),
        "result": {
            "converged": result.converged,
            "fidelity": result.state.fidelity,
            "infidelity": 1.0 - result.state.fidelity,
            "cycles": result.cycles,
            "lambda_mean": lam_mean,
            "lambda_rel_std": lam_rel,
            "monotonicity_violations": len(violations),
            "worst_violation": max(
                (r.violation_magnitude for r in violations), default=0.0
            ),
            "degenerate_slices": result.state.degenerate_slices,
        },
        "field": {"csv": csv_path.name, "meta": meta_path.name},
    }
    record_path = root / f"solve-{digest}.json"
    record_path.write_text(json.dumps(record, indent=1, sort_keys=True) + "\n")
    print(record_path)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


# -- sweep ------------------------------------------------------------------


def cmd_sweep(args) -> int:
    plan_path = Path(args.plan)
    if not plan_path.is_file():
        return _fail(f"plan file not found: {plan_path}")
    try:
        plan = SweepPlan.from_json(json.loads(plan_path.read_text()))
    except (ValueError, KeyError, TypeError) as exc:
        return _fail(f"invalid sweep plan: {exc}")
    config = {"cmd": "sweep", "plan": plan.to_json()}
    digest = config_hash(config)
    out_dir = Path(args.out) if args.out else _output_root(None) / f"sweep-{digest}"
    jobs = args.jobs if args.jobs is not None else _default_jobs()
    if jobs < 1:
        return _fail("--jobs must be at least 1")

    branches, envelope = run_sweep(plan, out_dir=out_dir, jobs=jobs, resume=args.resume)

    write_envelope_csv(envelope, out_dir / "envelope.csv", provenance=_provenance(config))
    n_records = sum(len(b.records) for b in branches)
    n_converged = sum(r.converged for b in branches for r in b.records)
    record = {
        "kind": "sweep",
        "config": config,
        **_provenance(config),
        "result": {
            "branches": len(branches),
            "records": n_records,
            "converged_records": n_converged,
            "envelope": [
                {"t_over_t2max": t, "fidelity": f, "converged": c}
                for t, f, c in envelope.points
            ],
            "crossovers": list(envelope.crossovers),
        },
        "files": {"store": "index.json", "envelope": "envelope.csv"},
    }
    record_path = out_dir / f"sweep-{digest}.json"
    record_path.write_text(json.dumps(record, indent=1, sort_keys=True) + "\n")
    print(record_path)
    return EXIT_OK


# -- estimate / fit ---------------------------------------------------------


def cmd_estimate(args) -> int:
    env_path = Path(args.envelope)
    if not env_path.is_file():
        return _fail(f"envelope file not found: {env_path}")
    try:
        window = _parse_window(args.window) or DEFAULT_WINDOW
    except ValueError as exc:
        return _fail(str(exc))
    try:
        points = _read_envelope_csv(env_path)
    except (ValueError, IndexError) as exc:
        return _fail(f"malformed envelope CSV: {exc}")
    config = {
        "cmd": "estimate",
        "envelope": str(env_path),
        "window": list(window),
    }
    try:
        fit = estimate_time_complexity(points, window=window)
    except InsufficientDataError as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT_DATA
    except FitConvergenceError as exc:
        print(f"fit did not converge: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT_DATA
    record = {"kind": "estimate", "config": config, **_provenance(config)}
    record["fit"] = fit.to_json()
    _emit(record, args.out)
    return EXIT_OK


def cmd_fit(args) -> int:
    in_path = Path(args.infile)
    if not in_path.is_file():
        return _fail(f"input file not found: {in_path}")
    try:
        window = _parse_window(args.window)
    except ValueError as exc:
        return _fail(str(exc))
    if window is not None and args.model != "power":
        return _fail("--window only applies to the power model")
    try:
        points = _read_xy_csv(in_path)
    except ValueError as exc:
        return _fail(str(exc))
    config = {
        "cmd": "fit",
        "model": args.model,
        "in": str(in_path),
        "window": list(window) if window else None,
    }
    try:
        if args.model == "power":
            fit = fit_power(points, window=window or DEFAULT_WINDOW)
        elif args.model == "linear":
            fit = fit_linear(points)
        else:
            fit = fit_exp2(points)
    except InsufficientDataError as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT_DATA
    except FitConvergenceError as exc:
        print(f"fit did not converge: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT_DATA
    except ValueError as exc:
        return _fail(str(exc))
    record = {"kind": "fit", "config": config, **_provenance(config)}
    record["fit"] = fit.to_json()
    _emit(record, args.out)
    return EXIT_OK


# -- verify -----------------------------------------------------------------


def _run_check(name: str, state, field, basis) -> dict:
    if name == "lambda":
        return {"relative_std": lambda_constancy(state.lambda_record)}
    if name == "onequbit":
        rep = one_qubit_constancy(field, basis)
        return {
            "aggregate": rep.aggregate,
            "relative": rep.relative,
            "per_generator": rep.per_generator,
        }
    if name == "timereversal":
        rep = time_reversal_residual(field, basis)
        return {
            "aggregates": rep.aggregates,
            "relative": rep.relative,
            "tolerance": rep.tolerance,
            "passed": rep.passed,
        }
    if name == "costate":
        return {"max_abs": costate_commutator_residual(state, basis)}
    if name == "graded":
        rep = graded_residual(state, basis, leak_tol=math.inf)
        return {
            "projection_leakage": rep.projection_leakage,
            "weight1_rate": rep.weight1_rate,
            "weight2_mismatch": rep.weight2_mismatch,
        }
    raise ValueError(f"unknown check {name!r}")


def cmd_verify(args) -> int:
    run_path = Path(args.run)
    if not run_path.is_file():
        return _fail(f"run record not found: {run_path}")
    try:
        rec = json.loads(run_path.read_text())
        target_name = rec["config"]["target"]
        field_csv = rec["field"]["csv"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        return _fail(f"not a solve record: {exc}")
    checks = tuple(c.strip() for c in args.checks.split(",") if c.strip())
    unknown = [c for c in checks if c not in DEFAULT_CHECKS]
    if unknown:
        return _fail(f"unknown checks: {', '.join(unknown)}")

    base = run_path.parent / field_csv
    try:
        field, n = ControlField.load(base.with_suffix(""))
    except (OSError, ValueError, KeyError) as exc:
        return _fail(f"cannot load field for record: {exc}")
    try:
        tgt = target_by_name(target_name, n)
    except ValueError as exc:
        return _fail(str(exc))
    basis = enumerate_basis(n)
    state = evaluate_field(field, tgt.matrix, basis)

    config = {"cmd": "verify", "run": str(run_path), "checks": list(checks)}
    reports = {}
    failed = []
    for name in checks:
        try:
            reports[name] = _run_check(name, state, field, basis)
        except ValueError as exc:
            reports[name] = {"error": str(exc)}
            failed.append(name)
    record = {
        "kind": "verify",
        "config": config,
        **_provenance(config),
        "target": {"name": target_name, "n": n},
        "fidelity": state.fidelity,
        "t_over_t2max": field.grid.t_total / T2MAX,
        "checks": reports,
    }
    _emit(record, args.out)
    if failed:
        print(f"checks failed to evaluate: {', '.join(failed)}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qtimeopt",
        description="Norm-constrained control solves, sweeps, fits and checks.",
        epilog=(
            "exit codes: 0 ok, 1 bad config or missing input, "
            "2 not converged, 3 insufficient data. "
            "Env overrides: QTIMEOPT_OUTPUT_ROOT, QTIMEOPT_JOBS."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("basis", help="dump the ordered generator table")
    p.add_argument("--n", type=int, required=True, help="number of qubits")
    p.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    p.set_defaults(func=cmd_basis)

    p = sub.add_parser("target", help="describe a target unitary")
    p.add_argument("--name", required=True, help="qft, asym, w, cnot or swap")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dump-matrix", metavar="CSV", help="write the matrix as CSV")
    p.add_argument(
        "--gates", action="store_true", help="include the gate decomposition (qft only)"
    )
    p.set_defaults(func=cmd_target)

    p = sub.add_parser("solve", help="single solve, JSON record + field CSV")
    p.add_argument("--target", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t", type=float, required=True, help="total time in t2max units")
    p.add_argument("--seed", type=int, required=True, help="RNG seed (no default)")
    p.add_argument("--slices", type=int, help="grid slices (default: 200*T/t2max)")
    p.add_argument("--max-cycles", type=int, default=10_000)
    p.add_argument("--ftol", type=float, default=1e-9)
    p.add_argument("--lambda-tol", type=float, default=1e-3)
    p.add_argument("--window", type=int, default=10, help="stopping window, cycles")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="fidelity-time sweep with recycling")
    p.add_argument("--plan", required=True, help="sweep plan JSON file")
    p.add_argument("--out", help="branch store directory")
    p.add_argument("--jobs", type=int, help="parallel workers within one pass")
    p.add_argument("--resume", action="store_true", help="continue a partial store")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("estimate", help="minimal-time estimate from an envelope")
    p.add_argument("--envelope", required=True, help="envelope CSV from a sweep")
    p.add_argument("--window", help="fit window LO:HI in 1-F (default 0.002:0.01)")
    p.add_argument("--out", help="also write the record JSON here")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("fit", help="fit a curve model to CSV points")
    p.add_argument("--model", required=True, choices=["power", "linear", "exp2"])
    p.add_argument("--in", dest="infile", required=True, help="CSV with x,y columns")
    p.add_argument("--window", help="power model only: window LO:HI")
    p.add_argument("--out", help="also write the record JSON here")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("verify", help="run diagnostics on a solve record")
    p.add_argument("--run", required=True, help="solve record JSON")
    p.add_argument(
        "--checks",
        default=",".join(DEFAULT_CHECKS),
        help="comma list from: " + ", ".join(DEFAULT_CHECKS),
    )
    p.add_argument("--out", help="also write the report JSON here")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
