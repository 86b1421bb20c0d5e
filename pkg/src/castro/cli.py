"""
Command-line interface.

    castro sample  --config problem.json [--data prior.csv] --out DIR
    castro metrics --config problem.json --design design.csv [--data prior.csv]
    castro project --input data=prior.csv --input new=design.csv --out coords.csv

Exit codes: 0 success, 2 configuration error, 3 infeasible problem, 4 input
or output error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import warnings
from dataclasses import dataclass, field, replace
from decimal import Decimal
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from castro import __version__
from castro.errors import CastroError, ConfigError, DataError, InfeasibleError
from castro.lhs import Engine
from castro.metrics import metrics_table, pca_project_2d
from castro.pipeline import PipelineOptions, PipelineResult, run_pipeline
from castro.problem import (
    ProblemSpec,
    empty_dataset,
    load_experiment_csv,
    load_problem_config,
    serialize_problem_config,
)

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO = 0, 2, 3, 4
SEED_ENV = "CASTRO_SEED"


@dataclass
class RunManifest:
    """Everything needed to reproduce a ``sample`` run, minus the binary."""

    version: str
    seed: int
    config: dict
    config_sha256: str
    data_sha256: Optional[str]
    engines: list
    options: dict
    engine_runs: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "version": self.version,
            "seed": self.seed,
            "config": self.config,
            "config_sha256": self.config_sha256,
            "data_sha256": self.data_sha256,
            "engines": self.engines,
            "options": self.options,
            "runs": self.engine_runs,
            "notes": self.notes,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def format_rows(rows, names: Sequence[str], decimals: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    for row in np.asarray(rows, dtype=float):
        # + 0.0 turns -0.0 into 0.0
        writer.writerow([f"{np.round(v, decimals) + 0.0:.{decimals}f}" for v in row])
    return buf.getvalue()


def validate_written_rows(text: str, spec: ProblemSpec, decimals: int) -> list:
    """Re-check formatted recommendations using exact decimal arithmetic.

    Works on the CSV text itself so it shares no code path with the
    sampler. Returns a list of human-readable problems (empty when valid).
    """
    unit = Decimal(1).scaleb(-decimals)
    half = unit / 2
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    idx = {n: header.index(n) for n in spec.names}
    gb = spec.global_bounds()
    problems = []
    for lineno, record in enumerate(reader, start=2):
        vals = [Decimal(record[idx[n]]) for n in spec.names]
        if sum(vals) != 1:
            problems.append(f"line {lineno}: sums to {sum(vals)}")
        for b, v in zip(gb, vals):
            if v < Decimal(repr(b.lower)) - half or v > Decimal(repr(b.upper)) + half:
                problems.append(f"line {lineno}: {b.name}={v} outside [{b.lower}, {b.upper}]")
        for g in spec.groups:
            part = [vals[i] for i in g.member_indices]
            total = sum(part)
            lo, hi = Decimal(repr(g.aggregate.lower)), Decimal(repr(g.aggregate.upper))
            if total < lo - half * len(part) or total > hi + half * len(part):
                problems.append(f"line {lineno}: {g.name} total {total} outside [{lo}, {hi}]")
            syn = g.synthesis
            if syn is None:
                continue
            support = [j for j, v in enumerate(part) if v != 0]
            ok = (len(support) == 0
                  or (len(support) == 1 and syn.single_allowed(support[0]))
                  or (len(support) == 2 and syn.pair_allowed(*support)))
            if not ok:
                used = "+".join(g.slots[j] for j in support)
                problems.append(f"line {lineno}: {g.name} support {used} is not allowed")
    return problems


def _override_main(spec: ProblemSpec, **changes) -> ProblemSpec:
    """Apply ``changes`` at top level and to the main subproblem entry."""
    changes = {k: v for k, v in changes.items() if v is not None}
    if not changes:
        return spec
    partition = spec.partition
    if partition:
        partition = (replace(partition[0], **changes),) + tuple(partition[1:])
    return replace(spec, partition=partition, **changes)


def effective_spec(args) -> ProblemSpec:
    spec = load_problem_config(args.config)
    top = {}
    if args.budget is not None:
        top["budget"] = args.budget
    if args.pool_size is not None:
        top["pool_size"] = args.pool_size
    if args.decimals is not None:
        top["rounding_decimals"] = args.decimals
    for key, value in top.items():
        if value < (0 if key == "rounding_decimals" else 1):
            raise ConfigError(f"--{key.replace('_', '-')} must be positive, got {value}")
    spec = replace(spec, **top)
    return _override_main(spec, tot_samp=args.tot_samp, max_rej=args.max_rej)


def _engines(method: str) -> tuple:
    return tuple(Engine) if method == "both" else (Engine(method),)


def _outcome_dict(o) -> dict:
    d = {"perm": list(o.perm), "accepted": o.accepted,
         "pairing_rejections": o.pairing_rejections, "bound_rejections": o.bound_rejections}
    if o.error:
        d["error"] = o.error
    return d


def build_manifest(result: PipelineResult, seed: int, config_text: str,
                   data_bytes: Optional[bytes], options: PipelineOptions) -> RunManifest:
    runs = {}
    for engine, rec in result.recommendations.items():
        subs = {}
        for sub in result.subproblems[engine]:
            subs[sub.name] = {
                "raw_pool": sub.raw_pool_size,
                "synthesizable_pool": int(sub.pool.shape[0]),
                "shortlist": int(sub.selected.shape[0]),
                "synthesis_rules": sub.synthesis_rules,
                "permutations": [_outcome_dict(o) for o in sub.outcomes],
            }
        runs[engine.value] = {
            "subproblems": subs,
            "working_pool": int(rec.candidates.shape[0]),
            "excluded_after_rounding": rec.excluded_after_rounding,
            "recommended": int(rec.rows.shape[0]),
            "provenance": rec.provenance,
            "metrics": [m.as_dict() for m in rec.metrics],
        }
    opts = {
        "all_select": options.all_select,
        "num_select": options.num_select,
        "max_rej": options.max_rej,
        "min_mutual": options.min_mutual,
    }
    return RunManifest(
        version=__version__,
        seed=seed,
        config=json.loads(config_text),
        config_sha256=_sha256(config_text.encode("utf-8")),
        data_sha256=None if data_bytes is None else _sha256(data_bytes),
        engines=[e.value for e in options.engines],
        options=opts,
        engine_runs=runs,
        notes=list(result.notes),
    )


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from None


def cmd_sample(args) -> int:
    spec = effective_spec(args)
    data_bytes = None
    if args.data:
        data_bytes = _read_bytes(args.data)
        data = load_experiment_csv(args.data, spec, strict=not args.renormalize)
    else:
        data = empty_dataset(spec.names)
    options = PipelineOptions(
        seed=args.seed,
        engines=_engines(args.method),
        all_select=args.num_select is None,
        num_select=args.num_select,
        min_mutual=args.min_mutual,
        workers=args.workers,
    )
    result = run_pipeline(spec, data, options)

    outputs = {}
    for engine, rec in result.recommendations.items():
        text = format_rows(rec.rows, spec.names, spec.rounding_decimals)
        problems = validate_written_rows(text, spec, spec.rounding_decimals)
        if problems:
            raise InfeasibleError(f"{engine.label}: recommendations fail re-validation:\n  "
                                  + "\n  ".join(problems))
        outputs[f"recommendations_{engine.value}.csv"] = text

    config_text = serialize_problem_config(spec)
    manifest = build_manifest(result, args.seed, config_text, data_bytes, options)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from None
    for name, text in outputs.items():
        _write_text(out / name, text)
    _write_text(out / "manifest.json", manifest.to_json())
    for name in outputs:
        print(out / name)
    return EXIT_OK


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.6f}"


def cmd_metrics(args) -> int:
    spec = load_problem_config(args.config)
    design = load_experiment_csv(args.design, spec, strict=False)
    pool = load_experiment_csv(args.pool, spec, strict=False) if args.pool else design
    gb = spec.global_bounds()
    data_rows = None
    if args.data:
        data = load_experiment_csv(args.data, spec, strict=False)
        keep = np.setdiff1d(np.arange(data.n_exp), data.out_of_bounds)
        if keep.size < data.n_exp:
            print(f"note: {data.n_exp - keep.size} data row(s) outside the bounds are left out",
                  file=sys.stderr)
        data_rows = data.rows[keep]
    try:
        reports = metrics_table(design.rows, data_rows, pool.rows, gb)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    if design.n_exp < 2:
        print("note: variance needs at least 2 points; reported as n/a", file=sys.stderr)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scope", "points", "cd", "wd", "variance"])
    for r in reports:
        writer.writerow([r.scope, r.point_count, _fmt(r.cd), _fmt(r.wd), _fmt(r.variance)])
    if args.out:
        _write_text(Path(args.out), buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def _read_labeled_csv(path: str):
    text = _read_bytes(path).decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise DataError(f"{path}: empty file, expected a header row")
    header = [h.strip() for h in header]
    rows = []
    for lineno, record in enumerate(reader, start=2):
        if not record:
            continue
        if len(record) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(record)}")
        try:
            rows.append([float(c) for c in record])
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric cell") from None
    return header, np.array(rows, dtype=float).reshape(-1, len(header))


def cmd_project(args) -> int:
    sources = []
    for item in args.input:
        label, sep, path = item.partition("=")
        if not sep:
            label, path = Path(item).stem, item
        sources.append((label, *_read_labeled_csv(path)))
    ref_label, ref_header, _ = sources[0]
    blocks, labels = [], []
    for label, header, rows in sources:
        missing = [c for c in ref_header if c not in header]
        extra = [c for c in header if c not in ref_header]
        if missing or extra:
            col = (missing or extra)[0]
            raise DataError(f"source {label!r}: column {col!r} does not match source {ref_label!r}")
        blocks.append(rows[:, [header.index(c) for c in ref_header]])
        labels += [label] * rows.shape[0]
    try:
        proj = pca_project_2d(np.vstack(blocks))
    except ValueError as exc:
        raise DataError(str(exc)) from None
    dropped = [ref_header[j] for j in range(len(ref_header)) if j not in proj.kept_columns]
    if dropped:
        print(f"note: constant column(s) dropped: {', '.join(dropped)}", file=sys.stderr)
    print("explained variance: " + ", ".join(f"{v:.4f}" for v in proj.explained_variance_ratio),
          file=sys.stderr)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["source", "pc1", "pc2"])
    for label, (a, b) in zip(labels, proj.coords):
        writer.writerow([label, f"{a:.6f}", f"{b:.6f}"])
    _write_text(Path(args.out), buf.getvalue())
    return EXIT_OK


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="castro", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=f"castro {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-permutation details")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="recommend new experiments")
    s.add_argument("--config", required=True, help="problem JSON")
    s.add_argument("--data", help="CSV of prior experiments (header = component names)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, default=None, help=f"master seed (default ${SEED_ENV} or 0)")
    s.add_argument("--method", choices=["lhs", "lhsmdu", "both"], default="both")
    s.add_argument("--tot-samp", type=int, help="total samples for the main subproblem")
    s.add_argument("--budget", type=int, help="number of experiments to recommend")
    s.add_argument("--pool-size", type=int, help="shortlist size per subproblem")
    s.add_argument("--decimals", type=int, help="output precision")
    s.add_argument("--max-rej", type=int, help="pairing rejections allowed per permutation "
                                               "(main subproblem)")
    sel = s.add_mutually_exclusive_group()
    sel.add_argument("--all-select", action="store_true",
                     help="keep every feasible row from every permutation (default)")
    sel.add_argument("--num-select", type=int,
                     help="keep only this many far-apart rows per additional permutation")
    s.add_argument("--min-mutual", type=float, help="minimum distance between recommendations")
    s.add_argument("--workers", type=int, default=1, help="threads per permutation sweep")
    s.add_argument("--renormalize", action="store_true",
                   help="rescale data rows that do not sum to 1 instead of failing")
    s.set_defaults(func=cmd_sample)

    m = sub.add_parser("metrics", help="discrepancy and variance of a design")
    m.add_argument("--config", required=True, help="problem JSON (supplies the bounds)")
    m.add_argument("--design", required=True, help="design CSV")
    m.add_argument("--data", help="prior experiments CSV")
    m.add_argument("--pool", help="candidate pool CSV (defaults to the design)")
    m.add_argument("--out", help="write the table here instead of stdout")
    m.set_defaults(func=cmd_metrics)

    p = sub.add_parser("project", help="standardized 2-D PCA coordinates for plotting")
    p.add_argument("--input", action="append", required=True, metavar="LABEL=CSV",
                   help="labeled source; repeat for several")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_project)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    warnings.simplefilter("default")
    try:
        if getattr(args, "seed", 0) is None:
            args.seed = _default_seed()
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DataError as exc:
        print(f"input/output error: {exc}", file=sys.stderr)
        return EXIT_IO
    except CastroError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
