"""Fidelity-time sweeps with output recycling.

A sweep solves the same target over a grid of total times, combining
fresh random seeds at each time with recycled fields carried over from
the neighboring time in either direction.  Each fresh seed starts a
branch; recycling appends records to the branch whose endpoint supplied
the starting field, so a branch is a chain of (time, field, fidelity)
records whose provenance is traceable back to one seed.  The envelope
keeps the best fidelity per time over all branches, which is the curve
the power-law fit consumes.

Recycling a field to a nearby total time keeps the slice count and the
per-slice values and only rescales dt, so the piecewise-constant
control carries over exactly and stays on the normalization sphere.
Branches can persist to a directory (JSON index plus one CSV per
record) after every grid step, making long sweeps resumable.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path

import numpy as np

from .krotov import ConvergenceCriteria, solve
from .pauli import BASIS_ORDERING_VERSION, GeneratorTable, enumerate_basis
from .propagation import ControlField, TimeGrid, default_slices
from .targets import target_by_name
from .units import OMEGA, T2MAX

__all__ = [
    "SweepPlan",
    "BranchRecord",
    "SweepBranch",
    "EnvelopePoint",
    "Envelope",
    "recycle_field",
    "refine_field",
    "resample_field",
    "run_sweep",
    "envelope_of",
    "write_envelope_csv",
]

logger = logging.getLogger(__name__)

_DIRECTIONS = ("up", "down")


@dataclass(frozen=True)
class SweepPlan:
    """Everything needed to reproduce a sweep bit for bit.

    ``t_values`` are total times in units of T2MAX, strictly increasing.
    ``slices`` overrides the per-time default grid when set (recycled
    records always keep their parent's slice count regardless).
    ``max_recycle_branches`` caps how many branch endpoints are carried
    to the next time per direction, best fidelity first.
    """

    target: str
    n: int
    t_values: tuple[float, ...]
    seeds_per_t: int = 8
    recycle: bool = True
    directions: tuple[str, ...] = _DIRECTIONS
    criteria: ConvergenceCriteria = ConvergenceCriteria()
    slices: int | None = None
    master_seed: int = 0
    max_recycle_branches: int = 4
    omega: float = OMEGA

    def __post_init__(self):
        object.__setattr__(self, "t_values", tuple(float(t) for t in self.t_values))
        object.__setattr__(self, "directions", tuple(self.directions))
        if not self.t_values:
            raise ValueError("t_values must be non-empty")
        if any(t <= 0 for t in self.t_values):
            raise ValueError("t_values must be positive")
        if any(b <= a for a, b in zip(self.t_values, self.t_values[1:])):
            raise ValueError("t_values must be strictly increasing")
        if self.seeds_per_t < 1:
            raise ValueError("seeds_per_t must be >= 1")
        if self.max_recycle_branches < 1:
            raise ValueError("max_recycle_branches must be >= 1")
        bad = set(self.directions) - set(_DIRECTIONS)
        if bad:
            raise ValueError(f"unknown recycle directions: {sorted(bad)}")
        if self.slices is not None and self.slices < 1:
            raise ValueError("slices override must be >= 1")

    def to_json(self) -> dict:
        return {
            "target": self.target,
            "n": self.n,
            "t_values": list(self.t_values),
            "seeds_per_t": self.seeds_per_t,
            "recycle": self.recycle,
            "directions": list(self.directions),
            "criteria": {
                "max_cycles": self.criteria.max_cycles,
                "fidelity_tol": self.criteria.fidelity_tol,
                "lambda_tol": self.criteria.lambda_tol,
                "window": self.criteria.window,
            },
            "slices": self.slices,
            "master_seed": self.master_seed,
            "max_recycle_branches": self.max_recycle_branches,
            "omega": self.omega,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SweepPlan":
        crit = d.get("criteria")
        criteria = ConvergenceCriteria(**crit) if crit else ConvergenceCriteria()
        return cls(
            target=d["target"],
            n=int(d["n"]),
            t_values=tuple(d["t_values"]),
            seeds_per_t=int(d.get("seeds_per_t", 8)),
            recycle=bool(d.get("recycle", True)),
            directions=tuple(d.get("directions", _DIRECTIONS)),
            criteria=criteria,
            slices=d.get("slices"),
            master_seed=int(d.get("master_seed", 0)),
            max_recycle_branches=int(d.get("max_recycle_branches", 4)),
            omega=float(d.get("omega", OMEGA)),
        )


@dataclass
class BranchRecord:
    """One solve inside a branch.

    ``origin`` is "seed:<k>" for a fresh start or "<up|down>:t<idx>" when
    the starting field was recycled from this branch's record at the
    adjacent grid index.  Failed solves keep ``field=None``, a NaN
    fidelity, and the error text.
    """

    t_index: int
    t_units: float
    fidelity: float
    cycles: int
    converged: bool
    origin: str
    field: ControlField | None = None
    error: str | None = None

    def to_json(self, field_base: str | None) -> dict:
        return {
            "t_index": self.t_index,
            "t_units": self.t_units,
            "fidelity": None if math.isnan(self.fidelity) else self.fidelity,
            "cycles": self.cycles,
            "converged": self.converged,
            "origin": self.origin,
            "field": field_base,
            "error": self.error,
        }


@dataclass
class SweepBranch:
    """A chain of records descending from one fresh seed."""

    label: str
    records: list[BranchRecord] = dc_field(default_factory=list)

    @property
    def endpoint(self) -> BranchRecord | None:
        for rec in reversed(self.records):
            if rec.field is not None:
                return rec
        return None


@dataclass(frozen=True)
class EnvelopePoint:
    t_units: float
    fidelity: float
    branch: str
    converged: bool


@dataclass
class Envelope:
    """Best fidelity per time plus the times where the leader changes."""

    entries: list[EnvelopePoint]
    crossovers: list[float]

    @property
    def points(self) -> list[tuple[float, float, bool]]:
        return [(e.t_units, e.fidelity, e.converged) for e in self.entries]


def recycle_field(fld: ControlField, t_new: float) -> ControlField:
    """Carry a piecewise-constant control to a new total time.

    The slice count and the per-slice coefficients are kept; only dt
    changes, so each slice stays on the normalization sphere exactly.
    """
    if t_new <= 0:
        raise ValueError("t_new must be positive")
    grid = TimeGrid(t_total=float(t_new), slices=fld.grid.slices)
    return ControlField(grid, fld.values.copy(), fld.omega)


def refine_field(fld: ControlField) -> ControlField:
    """Halve dt at fixed total time by splitting every slice in two."""
    grid = TimeGrid(fld.grid.t_total, 2 * fld.grid.slices)
    return ControlField(grid, np.repeat(fld.values, 2, axis=0), fld.omega)


def resample_field(fld: ControlField, slices: int) -> ControlField:
    """Transfer a field to a ``slices``-slice grid by midpoint interpolation.

    Slice values are read as samples at slice midpoints and linearly
    interpolated onto the midpoints of the new grid (the end slices
    extend flat).  Each new slice is then rescaled back onto the
    constraint sphere, which perturbs a smooth field only at second
    order in the slice width.  Unlike :func:`refine_field`, which keeps
    the piecewise-constant profile and therefore its jumps, this
    transfer keeps the smooth continuum shape fixed while the grid
    resolution changes, so it is the right tool when measuring how a
    discretization-sensitive quantity scales with dt.
    """
    grid = TimeGrid(fld.grid.t_total, slices)
    x_old = (np.arange(fld.grid.slices) + 0.5) * fld.grid.dt
    x_new = (np.arange(slices) + 0.5) * grid.dt
    vals = np.column_stack(
        [np.interp(x_new, x_old, fld.values[:, k]) for k in range(fld.values.shape[1])]
    )
    norms = np.linalg.norm(vals, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("interpolated slice collapsed to zero norm")
    sphere = np.sqrt(float(np.mean(np.sum(fld.values**2, axis=1))))
    vals *= sphere / norms
    return ControlField(grid, vals, fld.omega)


def envelope_of(branches) -> Envelope:
    """Best-of-branches curve; ties break toward the smaller label."""
    by_t: dict[int, list[tuple[float, str, BranchRecord]]] = {}
    for br in branches:
        for rec in br.records:
            if math.isnan(rec.fidelity):
                continue
            by_t.setdefault(rec.t_index, []).append((rec.fidelity, br.label, rec))
    entries = []
    for ti in sorted(by_t):
        fid, label, rec = max(by_t[ti], key=lambda row: (row[0], row[1]))
        entries.append(EnvelopePoint(rec.t_units, fid, label, rec.converged))
    crossovers = [
        b.t_units
        for a, b in zip(entries, entries[1:])
        if a.branch != b.branch
    ]
    return Envelope(entries, crossovers)


def write_envelope_csv(
    envelope: Envelope, path: str | Path, provenance: dict | None = None
) -> Path:
    """Write the envelope as CSV; ``provenance`` entries become leading
    ``# key=value`` comment lines (skipped by readers with comments='#')."""
    path = Path(path)
    lines = []
    if provenance:
        lines.extend(f"# {k}={v}" for k, v in sorted(provenance.items()))
    lines.append("t_over_t2max,fidelity,branch,converged")
    for e in envelope.entries:
        lines.append(f"{e.t_units!r},{e.fidelity!r},{e.branch},{int(e.converged)}")
    path.write_text("\n".join(lines) + "\n")
    return path


def _grid_for(plan: SweepPlan, t_units: float) -> TimeGrid:
    t_abs = t_units * T2MAX
    slices = plan.slices if plan.slices is not None else default_slices(t_abs)
    return TimeGrid(t_abs, slices)


def _solve_entry(payload: dict) -> dict:
    """One solve, self-contained so it can run in a worker process."""
    basis = enumerate_basis(payload["n"])
    grid = TimeGrid(payload["t_total"], payload["slices"])
    criteria = ConvergenceCriteria(**payload["criteria"])
    kwargs = dict(criteria=criteria, omega=payload["omega"])
    try:
        if payload.get("values") is not None:
            fld = ControlField(grid, payload["values"], payload["omega"])
            result = solve(payload["u_target"], grid, basis, field=fld, **kwargs)
        else:
            seed = np.random.SeedSequence(payload["seed_entropy"])
            result = solve(payload["u_target"], grid, basis, seed=seed, **kwargs)
    except Exception as exc:  # recorded, sweep continues
        return {"error": f"{type(exc).__name__}: {exc}"}
    return {
        "fidelity": result.fidelity,
        "cycles": result.cycles,
        "converged": result.converged,
        "values": result.state.field.values,
        "error": None,
    }


def _run_entries(entries: list[dict], jobs: int) -> list[dict]:
    if jobs <= 1 or len(entries) <= 1:
        return [_solve_entry(e) for e in entries]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_solve_entry, entries))


def _record_from(outcome: dict, ti: int, t_units: float, origin: str,
                 grid: TimeGrid, omega: float) -> BranchRecord:
    if outcome["error"] is not None:
        return BranchRecord(ti, t_units, float("nan"), 0, False, origin,
                            field=None, error=outcome["error"])
    fld = ControlField(grid, outcome["values"], omega)
    return BranchRecord(ti, t_units, outcome["fidelity"], outcome["cycles"],
                        outcome["converged"], origin, field=fld)


class _BranchStore:
    """Disk persistence: index.json plus one field CSV per record."""

    def __init__(self, root: str | Path, plan: SweepPlan):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.plan = plan

    @property
    def index_path(self) -> Path:
        return self.root / "index.json"

    def load(self) -> tuple[dict[str, SweepBranch], set[str]]:
        if not self.index_path.exists():
            return {}, set()
        data = json.loads(self.index_path.read_text())
        if data.get("plan") != self.plan.to_json():
            raise ValueError(
                "existing branch store was produced by a different plan; "
                "use a fresh output directory"
            )
        branches: dict[str, SweepBranch] = {}
        for label, info in data["branches"].items():
            br = SweepBranch(label=label)
            for rd in info["records"]:
                fld = None
                if rd["field"] is not None:
                    fld, n_stored = ControlField.load(self.root / rd["field"])
                    if n_stored != self.plan.n:
                        raise ValueError("stored field has the wrong qubit count")
                br.records.append(
                    BranchRecord(
                        t_index=rd["t_index"],
                        t_units=rd["t_units"],
                        fidelity=float("nan") if rd["fidelity"] is None else rd["fidelity"],
                        cycles=rd["cycles"],
                        converged=rd["converged"],
                        origin=rd["origin"],
                        field=fld,
                        error=rd["error"],
                    )
                )
            branches[label] = br
        return branches, set(data["done"])

    def save(self, branches: dict[str, SweepBranch], done: set[str]) -> None:
        index = {
            "plan": self.plan.to_json(),
            "basis_ordering": BASIS_ORDERING_VERSION,
            "done": sorted(done),
            "branches": {},
        }
        for label, br in branches.items():
            recs = []
            for k, rec in enumerate(br.records):
                base = None
                if rec.field is not None:
                    base = f"{label}_r{k:02d}"
                    if not (self.root / f"{base}.csv").exists():
                        rec.field.save(self.root / base, self.plan.n)
                recs.append(rec.to_json(base))
            index["branches"][label] = {"records": recs}
        tmp = self.index_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(index, indent=1))
        tmp.replace(self.index_path)


def run_sweep(
    plan: SweepPlan,
    *,
    out_dir: str | Path | None = None,
    jobs: int = 1,
    resume: bool = False,
) -> tuple[list[SweepBranch], Envelope]:
    """Execute a sweep plan and return its branches and envelope.

    Fresh seeds are drawn deterministically from the plan's master seed
    (entropy stream keyed by time index and seed index), so rerunning
    the same plan reproduces the same branch set.  When ``out_dir`` is
    given the branch store is flushed after every grid step; with
    ``resume`` a matching half-finished store is picked up where it
    stopped.  ``jobs`` > 1 runs the independent solves of one grid step
    in worker processes.
    """
    target = target_by_name(plan.target, plan.n)
    u_target = target.matrix
    store = _BranchStore(out_dir, plan) if out_dir is not None else None
    branches: dict[str, SweepBranch] = {}
    done: set[str] = set()
    if store is not None and resume:
        branches, done = store.load()

    def flush(step: str):
        done.add(step)
        if store is not None:
            store.save(branches, done)

    # Fresh seeds at every grid time.
    for ti, t_units in enumerate(plan.t_values):
        step = f"fresh:{ti}"
        if step in done:
            continue
        grid = _grid_for(plan, t_units)
        entries = [
            {
                "n": plan.n,
                "u_target": u_target,
                "t_total": grid.t_total,
                "slices": grid.slices,
                "criteria": plan.to_json()["criteria"],
                "omega": plan.omega,
                "seed_entropy": (plan.master_seed, ti, si),
                "values": None,
            }
            for si in range(plan.seeds_per_t)
        ]
        outcomes = _run_entries(entries, jobs)
        for si, outcome in enumerate(outcomes):
            label = f"t{ti:02d}-s{si:02d}"
            rec = _record_from(outcome, ti, t_units, f"seed:{si}", grid, plan.omega)
            branches.setdefault(label, SweepBranch(label)).records.append(rec)
            if rec.error is not None:
                logger.warning("solve %s at t=%g failed: %s", label, t_units, rec.error)
        flush(step)

    # Recycling passes: carry the best endpoints to the adjacent time.
    if plan.recycle and len(plan.t_values) > 1:
        for direction in plan.directions:
            if direction == "up":
                walk = range(1, len(plan.t_values))
                prev_of = lambda ti: ti - 1
            else:
                walk = range(len(plan.t_values) - 2, -1, -1)
                prev_of = lambda ti: ti + 1
            for ti in walk:
                step = f"{direction}:{ti}"
                if step in done:
                    continue
                prev = prev_of(ti)
                candidates = []
                for label in sorted(branches):
                    rec = branches[label].endpoint
                    if rec is not None and rec.t_index == prev:
                        candidates.append((rec.fidelity, label, rec))
                candidates.sort(key=lambda row: (-row[0], row[1]))
                candidates = candidates[: plan.max_recycle_branches]
                if not candidates:
                    flush(step)
                    continue
                t_units = plan.t_values[ti]
                t_abs = t_units * T2MAX
                entries = []
                for _fid, label, rec in candidates:
                    carried = recycle_field(rec.field, t_abs)
                    entries.append(
                        {
                            "n": plan.n,
                            "u_target": u_target,
                            "t_total": t_abs,
                            "slices": carried.grid.slices,
                            "criteria": plan.to_json()["criteria"],
                            "omega": plan.omega,
                            "values": carried.values,
                        }
                    )
                outcomes = _run_entries(entries, jobs)
                for (_fid, label, rec), outcome in zip(candidates, outcomes):
                    grid = TimeGrid(t_abs, rec.field.grid.slices)
                    new_rec = _record_from(
                        outcome, ti, t_units, f"{direction}:t{prev:02d}", grid, plan.omega
                    )
                    branches[label].records.append(new_rec)
                    if new_rec.error is not None:
                        logger.warning(
                            "recycled solve %s at t=%g failed: %s",
                            label, t_units, new_rec.error,
                        )
                flush(step)

    branch_list = [branches[label] for label in sorted(branches)]
    envelope = envelope_of(branch_list)
    if store is not None:
        write_envelope_csv(envelope, store.root / "envelope.csv")
    return branch_list, envelope
