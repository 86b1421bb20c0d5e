"""
Mixture-design problem definition and experimental data handling.

A problem is an ordered list of components with fractional bounds. Problems
with more than four components are split into a *main* subproblem over a few
direct components plus group aggregates, and one *group* subproblem per
aggregate. Bounds of group members are fractions *within* the group; the
group's total is bounded by its aggregate.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

from castro.errors import CastroWarning, ConfigError, DataError, InfeasibleError

MAX_SUBPROBLEM_DIM = 4
ROW_SUM_TOL = 1e-6


@dataclass(frozen=True)
class ComponentBounds:
    name: str
    lower: float
    upper: float

    def __post_init__(self):
        if not (0.0 <= self.lower <= self.upper <= 1.0):
            raise ConfigError(
                f"component {self.name!r}: need 0 <= lower <= upper <= 1, "
                f"got [{self.lower}, {self.upper}]"
            )

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class SynthesisConstraint:
    """Which components of a group may co-occur in a synthesizable row.

    Indices refer to positions inside the group, not to the full problem.
    """

    mode: str
    allowed_pairs: frozenset = frozenset()
    allowed_singles: frozenset = frozenset()

    def __post_init__(self):
        if self.mode not in ("pairs", "one_hot"):
            raise ConfigError(f"unknown synthesis mode {self.mode!r}")
        if self.mode == "one_hot" and self.allowed_pairs:
            raise ConfigError("one_hot synthesis forbids all pairs")
        for pair in self.allowed_pairs:
            if len(pair) != 2:
                raise ConfigError(f"allowed pair {sorted(pair)} must name two distinct components")

    def pair_allowed(self, i: int, k: int) -> bool:
        return self.mode == "pairs" and frozenset((i, k)) in self.allowed_pairs

    def single_allowed(self, i: int) -> bool:
        return self.mode == "one_hot" or i in self.allowed_singles


@dataclass(frozen=True)
class SubproblemSpec:
    """One low-dimensional piece of a partitioned problem.

    ``slots`` are the column names sampled for this subproblem. For the main
    subproblem a slot is either a component name or a group name (the group's
    total); ``member_indices`` holds the component index per slot, or None for
    aggregate slots. For a group, ``aggregate_slot`` is the position of its
    total among the main subproblem's slots.
    """

    kind: str
    name: str
    slots: tuple
    bounds: tuple
    member_indices: tuple
    aggregate_slot: Optional[int] = None
    aggregate: Optional[ComponentBounds] = None
    synthesis: Optional[SynthesisConstraint] = None
    tot_samp: Optional[int] = None
    max_rej: Optional[int] = None

    @property
    def dim(self) -> int:
        return len(self.slots)


@dataclass(frozen=True)
class ProblemSpec:
    components: tuple
    partition: tuple = ()
    budget: int = 15
    rounding_decimals: int = 3
    tot_samp: Optional[int] = None
    pool_size: int = 90
    max_rej: Optional[int] = None

    @property
    def names(self) -> tuple:
        return tuple(c.name for c in self.components)

    @property
    def dim(self) -> int:
        return len(self.components)

    def subproblems(self) -> tuple:
        """The effective partition: a single main subproblem when unpartitioned."""
        if self.partition:
            return self.partition
        return (
            SubproblemSpec(
                kind="main",
                name="main",
                slots=self.names,
                bounds=self.components,
                member_indices=tuple(range(self.dim)),
                tot_samp=self.tot_samp,
                max_rej=self.max_rej,
            ),
        )

    @property
    def main(self) -> SubproblemSpec:
        return self.subproblems()[0]

    @property
    def groups(self) -> tuple:
        return self.subproblems()[1:]

    def global_bounds(self) -> tuple:
        """Bounds of every component as a fraction of the whole mixture."""
        out = list(self.components)
        for g in self.groups:
            for idx in g.member_indices:
                c = self.components[idx]
                out[idx] = ComponentBounds(
                    c.name, c.lower * g.aggregate.lower, c.upper * g.aggregate.upper
                )
        return tuple(out)

    def sampling_budget(self, sub: SubproblemSpec) -> Optional[int]:
        return sub.tot_samp if sub.tot_samp is not None else self.tot_samp

    def rejection_allowance(self, sub: SubproblemSpec) -> Optional[int]:
        return sub.max_rej if sub.max_rej is not None else self.max_rej


@dataclass(frozen=True)
class ExperimentDataset:
    """Previously collected compositions, one experiment per row."""

    rows: np.ndarray
    names: tuple
    out_of_bounds: tuple = field(default=())

    @property
    def n_exp(self) -> int:
        return int(self.rows.shape[0])


def empty_dataset(names: Sequence[str]) -> ExperimentDataset:
    return ExperimentDataset(np.empty((0, len(names))), tuple(names))


def _check_mixture_feasible(label: str, bounds: Sequence[ComponentBounds]) -> None:
    lo = sum(b.lower for b in bounds)
    hi = sum(b.upper for b in bounds)
    if lo > 1.0 + 1e-12 or hi < 1.0 - 1e-12:
        raise InfeasibleError(
            f"{label}: mixture constraint infeasible "
            f"(sum of lowers {lo:.6g}, sum of uppers {hi:.6g})"
        )


def _schema() -> dict:
    text = resources.files("castro").joinpath("problem.schema.json").read_text()
    return json.loads(text)


def problem_from_dict(doc: dict) -> ProblemSpec:
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema error at {where}: {exc.message}") from None

    components = tuple(ComponentBounds(c["name"], float(c["lower"]), float(c["upper"]))
                       for c in doc["components"])
    names = [c.name for c in components]
    if len(set(names)) != len(names):
        raise ConfigError("component names must be unique")
    index = {n: i for i, n in enumerate(names)}

    partition = _build_partition(doc.get("partition", []), components, index)
    if not partition:
        if len(components) > MAX_SUBPROBLEM_DIM:
            raise ConfigError(
                f"{len(components)} components need a partition into subproblems "
                f"of at most {MAX_SUBPROBLEM_DIM} slots"
            )
        _check_mixture_feasible("problem", components)
    else:
        for sub in partition:
            _check_mixture_feasible(f"subproblem {sub.name!r}", sub.bounds)

    return ProblemSpec(
        components=components,
        partition=partition,
        budget=int(doc.get("budget", 15)),
        rounding_decimals=int(doc.get("rounding_decimals", 3)),
        tot_samp=doc.get("tot_samp"),
        pool_size=int(doc.get("pool_size", 90)),
        max_rej=doc.get("max_rej"),
    )


def _build_partition(entries, components, index) -> tuple:
    if not entries:
        return ()
    mains = [e for e in entries if e["kind"] == "main"]
    groups = [e for e in entries if e["kind"] == "group"]
    if len(mains) != 1:
        raise ConfigError(f"partition needs exactly one main entry, found {len(mains)}")
    main = mains[0]
    group_names = [g["name"] for g in groups]
    if len(set(group_names)) != len(group_names):
        raise ConfigError("group names must be unique")
    clash = set(group_names) & set(index)
    if clash:
        raise ConfigError(f"group names collide with component names: {sorted(clash)}")

    seen: dict = {}

    def claim(name, owner):
        if name not in index:
            raise ConfigError(f"partition entry {owner!r} references unknown component {name!r}")
        if name in seen:
            raise ConfigError(f"component {name!r} appears in both {seen[name]!r} and {owner!r}")
        seen[name] = owner

    agg_by_name = {}
    group_specs = []
    for g in groups:
        members = tuple(g["members"])
        for m in members:
            claim(m, g["name"])
        if len(members) > MAX_SUBPROBLEM_DIM:
            raise ConfigError(f"group {g['name']!r} has {len(members)} members (max {MAX_SUBPROBLEM_DIM})")
        agg = ComponentBounds(g["name"], float(g["aggregate"]["lower"]), float(g["aggregate"]["upper"]))
        agg_by_name[g["name"]] = agg
        local = {n: i for i, n in enumerate(members)}
        synthesis = None
        if "synthesis" in g:
            synthesis = _build_synthesis(g["synthesis"], local, g["name"])
        group_specs.append((g, members, agg, synthesis))

    main_slots = tuple(main["members"])
    if len(set(main_slots)) != len(main_slots):
        raise ConfigError("main members must be unique")
    main_bounds, main_idx = [], []
    for slot in main_slots:
        if slot in agg_by_name:
            main_bounds.append(agg_by_name[slot])
            main_idx.append(None)
        else:
            claim(slot, "main")
            main_bounds.append(components[index[slot]])
            main_idx.append(index[slot])
    if len(main_slots) > MAX_SUBPROBLEM_DIM:
        raise ConfigError(f"main problem has {len(main_slots)} slots (max {MAX_SUBPROBLEM_DIM})")
    missing = [n for n in index if n not in seen]
    if missing:
        raise ConfigError(f"components not assigned to any subproblem: {missing}")
    unused = [n for n in group_names if n not in main_slots]
    if unused:
        raise ConfigError(f"groups without an aggregate slot in the main problem: {unused}")

    out = [SubproblemSpec(
        kind="main",
        name="main",
        slots=main_slots,
        bounds=tuple(main_bounds),
        member_indices=tuple(main_idx),
        tot_samp=main.get("tot_samp"),
        max_rej=main.get("max_rej"),
    )]
    for g, members, agg, synthesis in group_specs:
        out.append(SubproblemSpec(
            kind="group",
            name=g["name"],
            slots=members,
            bounds=tuple(components[index[m]] for m in members),
            member_indices=tuple(index[m] for m in members),
            aggregate_slot=main_slots.index(g["name"]),
            aggregate=agg,
            synthesis=synthesis,
            tot_samp=g.get("tot_samp"),
            max_rej=g.get("max_rej"),
        ))
    return tuple(out)


def _build_synthesis(doc, local, group) -> SynthesisConstraint:
    def pos(name):
        if name not in local:
            raise ConfigError(f"synthesis rule of group {group!r} names non-member {name!r}")
        return local[name]

    if doc["mode"] == "one_hot":
        return SynthesisConstraint("one_hot")
    pairs = frozenset(frozenset((pos(a), pos(b))) for a, b in doc.get("allowed_pairs", []))
    singles = frozenset(pos(s) for s in doc.get("allowed_singles", []))
    return SynthesisConstraint("pairs", pairs, singles)


def parse_problem_config(text: str) -> ProblemSpec:
    """Parse and validate a JSON problem document.

    Raises
    ------
    ConfigError
        Malformed document, unknown or overlapping partition members.
    InfeasibleError
        Sum of lower bounds above one or sum of upper bounds below one.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("problem document must be a JSON object")
    return problem_from_dict(doc)


def load_problem_config(path) -> ProblemSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from None
    try:
        return parse_problem_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def problem_to_dict(spec: ProblemSpec) -> dict:
    doc: dict = {
        "components": [{"name": c.name, "lower": c.lower, "upper": c.upper} for c in spec.components],
        "budget": spec.budget,
        "rounding_decimals": spec.rounding_decimals,
        "pool_size": spec.pool_size,
    }
    for key in ("tot_samp", "max_rej"):
        if getattr(spec, key) is not None:
            doc[key] = getattr(spec, key)
    if spec.partition:
        entries = []
        for sub in spec.partition:
            if sub.kind == "main":
                entry = {"kind": "main", "members": list(sub.slots)}
            else:
                entry = {
                    "kind": "group",
                    "name": sub.name,
                    "members": list(sub.slots),
                    "aggregate": {"lower": sub.aggregate.lower, "upper": sub.aggregate.upper},
                }
                if sub.synthesis is not None:
                    entry["synthesis"] = _synthesis_to_dict(sub.synthesis, sub.slots)
            for key in ("tot_samp", "max_rej"):
                if getattr(sub, key) is not None:
                    entry[key] = getattr(sub, key)
            entries.append(entry)
        doc["partition"] = entries
    return doc


def _synthesis_to_dict(syn: SynthesisConstraint, slots) -> dict:
    if syn.mode == "one_hot":
        return {"mode": "one_hot"}
    pairs = sorted(sorted(p) for p in syn.allowed_pairs)
    return {
        "mode": "pairs",
        "allowed_pairs": [[slots[a], slots[b]] for a, b in pairs],
        "allowed_singles": [slots[i] for i in sorted(syn.allowed_singles)],
    }


def serialize_problem_config(spec: ProblemSpec) -> str:
    return json.dumps(problem_to_dict(spec), indent=2, sort_keys=True)


def _bounds_violations(rows: np.ndarray, bounds, tol: float = 1e-12) -> np.ndarray:
    lo = np.array([b.lower for b in bounds])
    hi = np.array([b.upper for b in bounds])
    return np.any((rows < lo - tol) | (rows > hi + tol), axis=1)


def load_experiment_csv(path, spec: ProblemSpec, strict: bool = True,
                        tol: float = ROW_SUM_TOL) -> ExperimentDataset:
    """Read prior experiments from a CSV whose header names the components.

    Columns are matched by name and may appear in any order; extra columns
    are an error. With ``strict=False`` rows whose sum is off by more than
    ``tol`` are renormalized instead of rejected. Rows outside the global
    component bounds are kept (they still matter for distances) and listed in
    ``out_of_bounds``.
    """
    names = spec.names
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read data {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file, expected a header row")
        header = [h.strip() for h in header]
        missing = [n for n in names if n not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {missing}")
        extra = [h for h in header if h not in names]
        if extra:
            raise DataError(f"{path}: unexpected column(s) {extra}")
        order = [header.index(n) for n in names]

        rows, problems = [], []
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(record)}")
            try:
                values = [float(record[j]) for j in order]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric cell in {record}") from None
            total = sum(values)
            if abs(total - 1.0) > tol:
                if strict:
                    problems.append(f"line {lineno}: row sums to {total:.6g}")
                    continue
                if total <= 0:
                    raise DataError(f"{path}:{lineno}: row sums to {total:.6g}, cannot renormalize")
                values = [v / total for v in values]
            rows.append(values)
    if problems:
        raise DataError(f"{path}: {len(problems)} row(s) violate the mixture constraint:\n  "
                        + "\n  ".join(problems))

    arr = np.array(rows, dtype=float).reshape(-1, len(names))
    flagged = np.flatnonzero(_bounds_violations(arr, spec.global_bounds(), tol))
    if flagged.size:
        warnings.warn(
            f"{path}: {flagged.size} row(s) lie outside the component bounds; "
            "kept for distance calculations",
            CastroWarning, stacklevel=2,
        )
    return ExperimentDataset(arr, names, tuple(int(i) for i in flagged))


def rescale_dataset_to_subproblem(data: ExperimentDataset, spec: ProblemSpec,
                                  sub: SubproblemSpec) -> ExperimentDataset:
    """Express full-dimensional experiments in a subproblem's coordinates.

    For a group, member columns are divided by their total; rows that contain
    none of the group carry no ratio information and are dropped. For the
    main subproblem each aggregate slot receives the total of its group.
    """
    rows = data.rows
    if sub.kind == "group":
        part = rows[:, list(sub.member_indices)]
        mass = part.sum(axis=1)
        keep = mass > 0
        out = part[keep] / mass[keep, None]
        if rows.shape[0] and not keep.any():
            warnings.warn(f"no experiment contains any component of group {sub.name!r}",
                          CastroWarning, stacklevel=2)
        return ExperimentDataset(out, sub.slots)

    groups = {g.name: g for g in spec.groups}
    cols = []
    for slot, idx in zip(sub.slots, sub.member_indices):
        if idx is not None:
            cols.append(rows[:, idx])
        else:
            cols.append(rows[:, list(groups[slot].member_indices)].sum(axis=1))
    out = np.column_stack(cols) if cols else np.empty((rows.shape[0], 0))
    return ExperimentDataset(out.reshape(rows.shape[0], len(sub.slots)), sub.slots)
