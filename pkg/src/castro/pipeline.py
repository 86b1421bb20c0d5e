"""
Divide-and-conquer pipeline.

Each subproblem (the main problem over direct components and group totals,
plus one problem per group) is sampled over all bound permutations. Group
samples are made synthesizable, every subproblem is cut down to a common
shortlist, the shortlists are zipped back into full compositions, and the
budget is spent on the candidates farthest from the prior experiments.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from castro.conditioned import SamplerConfig
from castro.errors import CastroWarning, ConfigError, InfeasibleError
from castro.lhs import Engine, RngStream
from castro.metrics import metrics_table
from castro.permutations import enumerate_bound_permutations, run_all_permutations
from castro.problem import (
    ExperimentDataset,
    ProblemSpec,
    SubproblemSpec,
    empty_dataset,
    rescale_dataset_to_subproblem,
)
from castro.selection import farthest_from_data, round_and_renormalize
from castro.synthesis import apply_synthesis

# second-level stream ids under each subproblem's stream
_SAMPLING, _SHORTLIST, _SHUFFLE = 0, 1, 2


@dataclass(frozen=True)
class PipelineOptions:
    seed: int = 0
    engines: tuple = (Engine.LHS, Engine.LHSMDU)
    max_rej: Optional[int] = None
    max_iter_dim2: int = 100
    max_iter_dim3: int = 100
    max_attempts: int = 10
    oversample: int = 5
    early_accept: bool = True
    all_select: bool = True
    num_select: Optional[int] = None
    min_mutual: Optional[float] = None
    workers: int = 1


@dataclass
class SubproblemResult:
    name: str
    engine: Engine
    pool: np.ndarray
    selected: np.ndarray
    selected_index: np.ndarray
    raw_pool_size: int
    outcomes: list = field(default_factory=list)
    synthesis_rules: dict = field(default_factory=dict)


@dataclass
class DesignRecommendation:
    engine: Engine
    rows: np.ndarray
    raw_rows: np.ndarray
    candidates: np.ndarray
    provenance: list
    metrics: list
    excluded_after_rounding: int = 0


@dataclass
class PipelineResult:
    spec: ProblemSpec
    recommendations: dict
    subproblems: dict
    notes: list = field(default_factory=list)


def _note(notes: list, msg: str) -> None:
    notes.append(msg)
    warnings.warn(msg, CastroWarning, stacklevel=3)


def _sampler_config(spec: ProblemSpec, sub: SubproblemSpec, engine: Engine,
                    opts: PipelineOptions, notes: list) -> SamplerConfig:
    tot_samp = spec.sampling_budget(sub)
    if tot_samp is None:
        raise ConfigError(f"subproblem {sub.name!r}: no tot_samp given")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        plan = enumerate_bound_permutations(sub.dim, tot_samp)
    for w in caught:
        _note(notes, f"{sub.name}: {w.message}")
    if plan.per_perm_n_samp < 1:
        raise ConfigError(f"subproblem {sub.name!r}: tot_samp={tot_samp} is smaller than "
                          f"the {len(plan.all_perms)} bound permutations")
    max_rej = opts.max_rej if opts.max_rej is not None else spec.rejection_allowance(sub)
    return SamplerConfig(
        n_samp=plan.per_perm_n_samp,
        tot_samp=tot_samp,
        max_rej=None if max_rej is None else min(max_rej, plan.per_perm_n_samp - 1),
        max_iter_dim2=opts.max_iter_dim2,
        max_iter_dim3=opts.max_iter_dim3,
        max_attempts=opts.max_attempts,
        engine=engine,
        oversample=opts.oversample,
        early_accept=opts.early_accept,
    )


def run_subproblem(spec: ProblemSpec, sub: SubproblemSpec, data: ExperimentDataset,
                   engine: Engine, opts: PipelineOptions, rng: RngStream,
                   notes: Optional[list] = None) -> SubproblemResult:
    """Sample one subproblem and shortlist ``spec.pool_size`` of its rows.

    The main problem (and any group without synthesis rules) keeps the rows
    farthest from the rescaled prior data; groups with synthesis rules are
    post-processed and then sampled uniformly at random.
    """
    notes = notes if notes is not None else []
    engine = Engine(engine)
    if sub.dim == 1:
        b = sub.bounds[0]
        if not b.lower <= 1.0 <= b.upper:
            raise InfeasibleError(f"subproblem {sub.name!r}: single slot cannot equal 1")
        pool = np.ones((spec.pool_size, 1))
        return SubproblemResult(sub.name, engine, pool, pool.copy(),
                                np.arange(spec.pool_size), spec.pool_size)

    cfg = _sampler_config(spec, sub, engine, opts, notes)
    n_exp = data.n_exp
    if cfg.tot_samp < n_exp + spec.budget:
        _note(notes, f"{sub.name}: tot_samp={cfg.tot_samp} is below n_exp + budget "
                     f"= {n_exp + spec.budget}")
    feasible = run_all_permutations(
        sub.bounds, cfg, rng.child(_SAMPLING), engines=(engine,),
        all_select=opts.all_select, num_select=opts.num_select, workers=opts.workers,
    )
    pool = feasible.samples[engine]
    raw_size = pool.shape[0]
    rules: dict = {}
    if sub.synthesis is not None:
        pool, applied = apply_synthesis(pool, sub.synthesis)
        rules = dict(sorted(Counter(applied).items()))
        if pool.shape[0] == 0:
            raise InfeasibleError(f"subproblem {sub.name!r}: synthesis rules rejected every row")

    k = spec.pool_size
    if pool.shape[0] < k:
        _note(notes, f"{sub.name}/{engine.label}: only {pool.shape[0]} feasible rows "
                     f"for a shortlist of {k}")
        k = pool.shape[0]
    if sub.synthesis is not None:
        gen = rng.child(_SHORTLIST).child(list(Engine).index(engine)).generator()
        idx = np.sort(gen.choice(pool.shape[0], size=k, replace=False))
    else:
        sub_data = rescale_dataset_to_subproblem(data, spec, sub)
        _, idx = farthest_from_data(pool, sub_data.rows, k, return_index=True)
    return SubproblemResult(sub.name, engine, pool, pool[idx], idx, raw_size,
                            feasible.outcomes[engine], rules)


def reassemble(main_rows, group_rows: Sequence, spec: ProblemSpec) -> np.ndarray:
    """Combine main-problem rows with group rows into full compositions.

    Group ``g``'s row is scaled by the main row's value in ``g``'s aggregate
    slot; rows are matched by position.
    """
    main_rows = np.atleast_2d(np.asarray(main_rows, dtype=float))
    groups = spec.groups
    if len(group_rows) != len(groups):
        raise ValueError(f"expected {len(groups)} group blocks, got {len(group_rows)}")
    n = main_rows.shape[0]
    full = np.zeros((n, spec.dim))
    main = spec.main
    for j, idx in enumerate(main.member_indices):
        if idx is not None:
            full[:, idx] = main_rows[:, j]
    for g, rows in zip(groups, group_rows):
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if rows.shape[0] != n:
            raise ValueError(f"group {g.name!r} has {rows.shape[0]} rows, main has {n}")
        full[:, list(g.member_indices)] = main_rows[:, [g.aggregate_slot]] * rows
    return full


def feasibility_violations(rows, spec: ProblemSpec, sum_tol: float = 1e-12,
                           bound_tol: float = 1e-12) -> np.ndarray:
    """Boolean mask of full-dimensional rows that break any constraint.

    Checks the unit sum, the global bounds of every component, the aggregate
    bounds of each group, and the support allowed by each synthesis rule.
    """
    x = np.atleast_2d(np.asarray(rows, dtype=float))
    bad = np.abs(x.sum(axis=1) - 1.0) > sum_tol
    gb = spec.global_bounds()
    lo = np.array([b.lower for b in gb])
    hi = np.array([b.upper for b in gb])
    bad |= np.any((x < lo - bound_tol) | (x > hi + bound_tol), axis=1)
    for g in spec.groups:
        part = x[:, list(g.member_indices)]
        total = part.sum(axis=1)
        bad |= (total < g.aggregate.lower - bound_tol) | (total > g.aggregate.upper + bound_tol)
        syn = g.synthesis
        if syn is None:
            continue
        for r, row in enumerate(part):
            support = tuple(int(i) for i in np.flatnonzero(row > 0))
            if len(support) == 0:
                continue
            if len(support) == 1:
                ok = syn.single_allowed(support[0])
            elif len(support) == 2:
                ok = syn.pair_allowed(*support)
            else:
                ok = False
            bad[r] |= not ok
    return bad


def final_select(candidates, data_rows, spec: ProblemSpec, engine: Engine,
                 min_mutual: Optional[float] = None, provenance: Optional[list] = None,
                 notes: Optional[list] = None) -> DesignRecommendation:
    """Pick ``spec.budget`` candidates farthest from the data and round them.

    Candidates whose rounded form breaks a constraint are not eligible.
    Metrics are computed on the unrounded selection.
    """
    notes = notes if notes is not None else []
    cands = np.atleast_2d(np.asarray(candidates, dtype=float))
    data_rows = np.asarray(data_rows, dtype=float).reshape(-1, spec.dim)
    decimals = spec.rounding_decimals
    rounded, _ = round_and_renormalize(cands, decimals)
    half_unit = 0.5 * 10.0 ** -decimals
    bad = feasibility_violations(rounded, spec, sum_tol=1e-9, bound_tol=half_unit)
    eligible = np.flatnonzero(~bad)
    if bad.any():
        _note(notes, f"{engine.label}: {int(bad.sum())} candidate(s) break a constraint "
                     "after rounding and were skipped")
    if eligible.size < spec.budget:
        raise InfeasibleError(f"{engine.label}: {eligible.size} eligible candidates for a "
                              f"budget of {spec.budget}")
    _, pick = farthest_from_data(cands[eligible], data_rows, spec.budget,
                                 min_mutual=min_mutual, return_index=True)
    chosen = eligible[pick]

    gb = spec.global_bounds()
    in_bounds = ~np.any((data_rows < np.array([b.lower for b in gb]) - 1e-9)
                        | (data_rows > np.array([b.upper for b in gb]) + 1e-9), axis=1)
    if not in_bounds.all():
        _note(notes, f"{int((~in_bounds).sum())} data row(s) outside the bounds are left out "
                     "of the metrics")
    metrics = metrics_table(cands[chosen], data_rows[in_bounds], cands, gb)
    prov = [dict(provenance[i], engine=engine.value) if provenance else {"candidate": int(i),
            "engine": engine.value} for i in chosen]
    return DesignRecommendation(engine, rounded[chosen], cands[chosen], cands, prov, metrics,
                                int(bad.sum()))


def run_pipeline(spec: ProblemSpec, data: Optional[ExperimentDataset] = None,
                 options: PipelineOptions = PipelineOptions()) -> PipelineResult:
    """Recommend ``spec.budget`` new experiments per engine."""
    data = data if data is not None else empty_dataset(spec.names)
    if tuple(data.names) != spec.names:
        raise ValueError("data columns do not match the problem components")
    root = RngStream(options.seed)
    notes: list = []
    recs, subs = {}, {}
    for engine in options.engines:
        engine = Engine(engine)
        results = [
            run_subproblem(spec, sub, data, engine, options, root.child(s), notes)
            for s, sub in enumerate(spec.subproblems())
        ]
        main, groups = results[0], results[1:]
        n_work = min(r.selected.shape[0] for r in results)
        if n_work < spec.pool_size:
            _note(notes, f"{engine.label}: working pool shrinks to {n_work} rows")

        group_blocks, group_index = [], []
        for s, g in enumerate(groups, start=1):
            gen = root.child(s).child(_SHUFFLE).child(list(Engine).index(engine)).generator()
            order = gen.permutation(g.selected.shape[0])[:n_work]
            group_blocks.append(g.selected[order])
            group_index.append(g.selected_index[order])
        full = reassemble(main.selected[:n_work], group_blocks, spec)

        provenance = []
        for r in range(n_work):
            entry = {"main": int(main.selected_index[r])}
            for g, gi in zip(groups, group_index):
                entry[g.name] = int(gi[r])
            provenance.append(entry)
        recs[engine] = final_select(full, data.rows, spec, engine, options.min_mutual,
                                    provenance, notes)
        subs[engine] = results
    return PipelineResult(spec, recs, subs, notes)
