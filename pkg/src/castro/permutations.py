"""
Outer loop over all orderings of the component bounds.

The conditioned sampler favours components sampled early, so it is run once
per permutation of the bounds and the results are mapped back to the original
column order and stacked.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from castro.conditioned import SamplerConfig, conditioned_sample
from castro.errors import CastroWarning, InfeasibleError
from castro.lhs import Engine, RngStream
from castro.selection import distance_matrix

log = logging.getLogger(__name__)

MAX_PERMUTED_DIM = 4


@dataclass(frozen=True)
class PermutationPlan:
    all_perms: tuple
    per_perm_n_samp: int


@dataclass
class PermutationOutcome:
    perm: tuple
    accepted: int
    pairing_rejections: int = 0
    bound_rejections: int = 0
    error: Optional[str] = None


@dataclass
class FeasiblePool:
    """Feasible rows per engine, in the original component order."""

    samples: dict = field(default_factory=dict)
    outcomes: dict = field(default_factory=dict)

    @property
    def lhs_samples(self) -> np.ndarray:
        return self.samples[Engine.LHS]

    @property
    def lhsmdu_samples(self) -> np.ndarray:
        return self.samples[Engine.LHSMDU]

    def per_perm_counts(self, engine: Engine) -> list:
        return [o.accepted for o in self.outcomes[engine]]


def enumerate_bound_permutations(d: int, tot_samp: Optional[int] = None) -> PermutationPlan:
    if d < 1:
        raise ValueError("dimension must be positive")
    if d > MAX_PERMUTED_DIM:
        raise ValueError(f"{d} components are too many to permute; partition the problem "
                         f"into subproblems of at most {MAX_PERMUTED_DIM}")
    perms = tuple(itertools.permutations(range(d)))
    per = 0
    if tot_samp is not None:
        per, rest = divmod(tot_samp, len(perms))
        if rest:
            warnings.warn(f"tot_samp={tot_samp} is not a multiple of {len(perms)} permutations; "
                          f"using {per} samples per permutation", CastroWarning, stacklevel=2)
    return PermutationPlan(perms, per)


def reorder_columns(samples: np.ndarray, combi: Sequence[int]) -> np.ndarray:
    """Write column ``num`` of ``samples`` to column ``combi[num]``."""
    samples = np.asarray(samples)
    out = np.zeros_like(samples)
    for num, ind in enumerate(combi):
        out[:, ind] = samples[:, num]
    return out


def select_by_distance_incremental(pool: np.ndarray, new: np.ndarray, num_select: int) -> np.ndarray:
    """Append up to ``num_select`` rows of ``new`` that are farthest from ``pool``.

    Rows are picked one at a time, each maximizing its distance to the nearest
    row accumulated so far.
    """
    pool = np.asarray(pool, dtype=float).reshape(-1, np.shape(new)[1])
    new = np.asarray(new, dtype=float)
    if num_select >= new.shape[0]:
        return np.vstack([pool, new])
    if pool.shape[0]:
        nearest = distance_matrix(new, pool).min(axis=1)
    else:
        nearest = np.full(new.shape[0], np.inf)
    taken = np.zeros(new.shape[0], dtype=bool)
    picks = []
    for _ in range(num_select):
        score = np.where(taken, -np.inf, nearest)
        j = int(np.argmax(score))
        picks.append(j)
        taken[j] = True
        nearest = np.minimum(nearest, distance_matrix(new, new[j:j + 1])[:, 0])
    return np.vstack([pool, new[picks]])


def _run_one(bounds, combi, cfg, stream):
    permuted = [bounds[c] for c in combi]
    try:
        result = conditioned_sample(permuted, cfg, stream)
    except InfeasibleError as exc:
        return np.empty((0, len(bounds))), PermutationOutcome(tuple(combi), 0, error=str(exc))
    rows = reorder_columns(result.rows, combi)
    outcome = PermutationOutcome(tuple(combi), result.accepted, result.pairing_rejections,
                                 result.bound_rejections)
    if result.diagnostics and result.accepted == 0:
        outcome.error = "; ".join(result.diagnostics)
    return rows, outcome


def run_all_permutations(bounds: Sequence, cfg: SamplerConfig, rng: RngStream,
                         engines: Sequence[Engine] = (Engine.LHS, Engine.LHSMDU),
                         all_select: bool = True, num_select: Optional[int] = None,
                         workers: int = 1) -> FeasiblePool:
    """Run the conditioned sampler under every bound permutation, per engine.

    ``rng.child(engine_index).child(perm_index)`` seeds each task, so results
    do not depend on ``workers`` or on completion order.

    Raises
    ------
    InfeasibleError
        No permutation produced a single feasible row for some engine.
    """
    plan = enumerate_bound_permutations(len(bounds))
    if not all_select and num_select is None:
        raise ValueError("num_select is required when all_select is false")
    pool = FeasiblePool()
    for engine in engines:
        engine = Engine(engine)
        ecfg = replace(cfg, engine=engine)
        estream = rng.child(list(Engine).index(engine))
        tasks = [(bounds, combi, ecfg, estream.child(p)) for p, combi in enumerate(plan.all_perms)]
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                results = list(ex.map(lambda t: _run_one(*t), tasks))
        else:
            results = [_run_one(*t) for t in tasks]

        stacked = np.empty((0, len(bounds)))
        for p, (rows, outcome) in enumerate(results):
            if outcome.error:
                log.info("%s permutation %s: %s", engine.label, outcome.perm, outcome.error)
            if all_select or p == 0:
                stacked = np.vstack([stacked, rows])
            else:
                stacked = select_by_distance_incremental(stacked, rows, num_select)
        if stacked.shape[0] == 0:
            raise InfeasibleError(f"{engine.label}: no permutation produced a feasible sample")
        pool.samples[engine] = stacked
        pool.outcomes[engine] = [o for _, o in results]
    return pool
