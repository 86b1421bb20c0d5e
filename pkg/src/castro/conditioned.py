"""
Conditioned sequential sampling for one ordering of the component bounds.

Components are drawn one at a time. The first two are paired index-by-index
so that their sums stay at or below one (greedy first-fit, then randomized
repair when the greedy pass leaves rows unmatched); a third component is
paired against those partial sums the same way, and the last component closes
the mixture as one minus the rest. Rows whose last component leaves its
bounds are dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from castro.errors import InfeasibleError
from castro.lhs import Engine, RngStream, scale_to_bounds, unit_design


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs of the conditioned sampler for one permutation.

    ``max_rej`` defaults to ``ceil(0.1 * n_samp)`` (capped below ``n_samp``).
    With ``early_accept`` the first-two-components stage stops as soon as
    ``n_samp - max_rej`` pairs are matched; otherwise it keeps redrawing for
    a complete matching and accepts a partial one only at the iteration cap.
    """

    n_samp: int
    max_rej: Optional[int] = None
    max_iter_dim2: int = 100
    max_iter_dim3: int = 100
    max_attempts: int = 10
    engine: Engine = Engine.LHS
    oversample: int = 5
    early_accept: bool = True
    tot_samp: Optional[int] = None

    def __post_init__(self):
        if self.n_samp < 1:
            raise ValueError("n_samp must be at least 1")
        if self.max_rej is None:
            object.__setattr__(self, "max_rej", min(math.ceil(0.1 * self.n_samp), self.n_samp - 1))
        if not 0 <= self.max_rej < self.n_samp:
            raise ValueError(f"max_rej must lie in [0, n_samp), got {self.max_rej} for n_samp={self.n_samp}")
        object.__setattr__(self, "engine", Engine(self.engine))

    @classmethod
    def from_budget(cls, tot_samp: int, n_perms: int, **kwargs) -> "SamplerConfig":
        return cls(n_samp=tot_samp // n_perms, tot_samp=tot_samp, **kwargs)

    @property
    def floor(self) -> int:
        return self.n_samp - self.max_rej


@dataclass
class PairingState:
    """Matching between left indices (rows of ``sum_matrix``) and right indices.

    ``left[j]`` is paired with ``right[j]``; the unmatched lists hold the
    complements. ``feasible_pairs`` is in row-major order.
    """

    sum_matrix: np.ndarray
    feasible_pairs: list
    left: list
    right: list
    left_unmatched: list
    right_unmatched: list
    _options: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._options:
            for i, k in self.feasible_pairs:
                self._options.setdefault(i, []).append(k)

    @property
    def matched(self) -> int:
        return len(self.left)

    def options(self, i: int) -> list:
        return self._options.get(i, [])

    def install(self, i: int, k: int) -> Optional[int]:
        """Pair ``i`` with ``k``, evicting whoever holds ``k``. Returns the evicted left."""
        evicted = None
        if k in self.right:
            j = self.right.index(k)
            evicted = self.left.pop(j)
            self.right.pop(j)
            self.left_unmatched.append(evicted)
            self.right_unmatched.append(k)
        self.left.append(i)
        self.right.append(k)
        self.left_unmatched.remove(i)
        self.right_unmatched.remove(k)
        return evicted

    def check(self) -> None:
        n_left, n_right = self.sum_matrix.shape
        assert len(self.left) == len(self.right)
        assert len(set(self.left)) == len(self.left), "duplicate left index"
        assert len(set(self.right)) == len(self.right), "duplicate right index"
        assert sorted(self.left + self.left_unmatched) == list(range(n_left))
        assert sorted(self.right + self.right_unmatched) == list(range(n_right))
        for i, k in zip(self.left, self.right):
            assert self.sum_matrix[i, k] <= 1.0


def greedy_pairing(sum_matrix: np.ndarray, positive: bool = False) -> PairingState:
    """First-fit matching scanning ``sum_matrix`` row-major.

    A pair is feasible when its sum is at most one (and, with ``positive``,
    strictly above zero).
    """
    sum_matrix = np.asarray(sum_matrix, dtype=float)
    ok = sum_matrix <= 1.0
    if positive:
        ok &= sum_matrix > 0.0
    n_left, n_right = sum_matrix.shape
    feasible = [(int(i), int(k)) for i, k in zip(*np.nonzero(ok))]
    left, right = [], []
    used_left, used_right = set(), set()
    for i, k in feasible:
        if i not in used_left and k not in used_right:
            left.append(i)
            right.append(k)
            used_left.add(i)
            used_right.add(k)
    return PairingState(
        sum_matrix=sum_matrix,
        feasible_pairs=feasible,
        left=left,
        right=right,
        left_unmatched=[i for i in range(n_left) if i not in used_left],
        right_unmatched=[k for k in range(n_right) if k not in used_right],
    )


def repair_pairing(state: PairingState, n_target: int, gen: np.random.Generator,
                   abort_after: int = 2, on_step: Optional[Callable] = None) -> PairingState:
    """One randomized repair pass over the currently unmatched left indices.

    Each unmatched left takes a uniformly chosen feasible partner, evicting
    the partner's current owner if needed. Evicted lefts are not revisited in
    the same pass. The pass aborts once more than ``abort_after`` unmatched
    lefts turned out to have no feasible partner at all.
    """
    without_pair = 0
    for m in list(state.left_unmatched):
        if state.matched >= n_target:
            break
        opts = state.options(m)
        if not opts:
            without_pair += 1
            if without_pair > abort_after:
                break
            continue
        state.install(m, opts[int(gen.integers(len(opts)))])
        if on_step is not None:
            on_step(state)
    return state


def repair_pairing_gt3(state: PairingState, n_target: int, max_rej: int,
                       gen: np.random.Generator, on_step: Optional[Callable] = None) -> PairingState:
    """Repair pass for the third-component stage.

    Unlike :func:`repair_pairing`, evicted lefts are queued again in the same
    pass; the number of evictions is capped at ``n_target``. The pass does
    nothing when at least ``max_rej`` unmatched lefts have no partner at all
    (only checked for ``max_rej > 0``).
    """
    hopeless = sum(1 for m in state.left_unmatched if not state.options(m))
    if max_rej > 0 and hopeless > max_rej - 1:
        return state
    evictions = 0
    queue = list(state.left_unmatched)
    pos = 0
    while pos < len(queue) and state.matched < n_target:
        if evictions >= n_target:
            break
        m = queue[pos]
        pos += 1
        if m not in state.left_unmatched:
            continue
        opts = state.options(m)
        if not opts:
            continue
        evicted = state.install(m, opts[int(gen.integers(len(opts)))])
        if evicted is not None:
            evictions += 1
            queue.append(evicted)
        if on_step is not None:
            on_step(state)
    return state


@dataclass
class PairedSamples:
    """Matched first two components and their sums."""

    sample1: np.ndarray
    sample2: np.ndarray
    state: PairingState
    iterations: int

    @property
    def sum_vec(self) -> np.ndarray:
        return self.sample1 + self.sample2


@dataclass
class ConditionedSampleSet:
    """Accepted rows of one conditioned-sampling run, in the sampled order."""

    rows: np.ndarray
    n_samp: int
    pairing_rejections: int = 0
    bound_rejections: int = 0
    diagnostics: list = field(default_factory=list)

    @property
    def accepted(self) -> int:
        return int(self.rows.shape[0])

    @property
    def rejected_count(self) -> int:
        return self.n_samp - self.accepted


def _generator(rng) -> np.random.Generator:
    return rng.generator() if isinstance(rng, RngStream) else rng


def _column_draw(bounds: Sequence, cfg: SamplerConfig, gen) -> Callable:
    def draw():
        unit = unit_design(cfg.engine, cfg.n_samp, len(bounds), gen, cfg.oversample)
        scaled = scale_to_bounds(unit, bounds)
        return tuple(scaled[:, j] for j in range(len(bounds)))
    return draw


def sample_dim1(bounds: Sequence, cfg: SamplerConfig, rng, draw=None) -> ConditionedSampleSet:
    """Single-component "mixture": only draws equal to one are feasible."""
    gen = _generator(rng)
    if bounds[0].upper < 1.0:
        return ConditionedSampleSet(
            np.empty((0, 1)), cfg.n_samp, bound_rejections=cfg.n_samp,
            diagnostics=[f"no feasible single-component mixture: 1 not in "
                         f"[{bounds[0].lower}, {bounds[0].upper}]"],
        )
    draw = draw or _column_draw(bounds[:1], cfg, gen)
    (s1,) = draw()
    s1 = np.asarray(s1, dtype=float)
    ok = s1 == 1.0
    diagnostics = []
    if not ok.all():
        diagnostics.append(f"{int((~ok).sum())} of {s1.size} draws differ from 1 and "
                           "violate the mixture constraint")
    return ConditionedSampleSet(s1[ok].reshape(-1, 1), cfg.n_samp,
                                bound_rejections=int((~ok).sum()), diagnostics=diagnostics)


def sample_dim2(bounds: Sequence, cfg: SamplerConfig, rng, draw=None) -> ConditionedSampleSet:
    """Draw the first component; the second is its complement.

    Raises
    ------
    InfeasibleError
        More than ``max_rej`` complements fall outside the second bounds.
    """
    gen = _generator(rng)
    draw = draw or _column_draw(bounds[:1], cfg, gen)
    (s1,) = draw()
    s1 = np.asarray(s1, dtype=float)
    s2 = 1.0 - s1
    ok = (s2 >= bounds[1].lower) & (s2 <= bounds[1].upper)
    rejected = int((~ok).sum())
    if ok.sum() < cfg.floor:
        raise InfeasibleError(f"rejection overflow: {rejected} of {s1.size} rows rejected "
                              f"(max_rej={cfg.max_rej})")
    return ConditionedSampleSet(np.column_stack([s1[ok], s2[ok]]), cfg.n_samp,
                                bound_rejections=rejected)


def sample_dim_gt2(bounds: Sequence, cfg: SamplerConfig, rng, draw=None) -> PairedSamples:
    """Pair draws of the first two components so that each pair sums to at most one.

    Each iteration draws fresh ``sample1``/``sample2`` vectors, matches them
    greedily and, if that leaves rows unmatched, runs one repair pass.

    Raises
    ------
    InfeasibleError
        The iteration cap ran out with fewer than ``n_samp - max_rej`` pairs.
    """
    gen = _generator(rng)
    draw = draw or _column_draw(bounds[:2], cfg, gen)
    n, cap = cfg.n_samp, cfg.max_iter_dim2
    best = 0
    for it in range(cap + 1):
        s1, s2 = (np.asarray(v, dtype=float) for v in draw())
        state = greedy_pairing(s1[:, None] + s2[None, :])
        full = min(s1.size, s2.size, n)
        if state.matched < full and it < cap and state.feasible_pairs:
            repair_pairing(state, full, gen)
        best = max(best, state.matched)
        if state.matched >= full or (
            state.matched >= cfg.floor and (cfg.early_accept or it == cap)
        ):
            return PairedSamples(s1[state.left], s2[state.right], state, it + 1)
    raise InfeasibleError(f"first-two-component pairing reached only {best} of {n} "
                          f"matches after {cap + 1} draws (need {cfg.floor})")


def extend_dim_gt3(paired: PairedSamples, bounds3, cfg: SamplerConfig, rng,
                   draw=None) -> tuple:
    """Pair a third component against the partial sums of the first two.

    Returns ``(columns, state)`` with ``columns`` an ``m x 3`` array; the
    first two columns are co-indexed by the matched partial sums, the third by
    the matched ``sample3`` draws.

    Raises
    ------
    InfeasibleError
        The cap ran out below ``n_samp - max_rej`` matches; the caller should
        redraw from the first stage.
    """
    gen = _generator(rng)
    draw = draw or _column_draw([bounds3], cfg, gen)
    sum_vec = paired.sum_vec
    cap = cfg.max_iter_dim3
    best = 0
    for it in range(cap + 1):
        (s3,) = draw()
        s3 = np.asarray(s3, dtype=float)
        state = greedy_pairing(sum_vec[:, None] + s3[None, :], positive=True)
        full = min(sum_vec.size, s3.size, cfg.n_samp)
        if state.matched < full and state.matched < cfg.floor and it < cap and state.feasible_pairs:
            repair_pairing_gt3(state, full, cfg.max_rej, gen)
        best = max(best, state.matched)
        if state.matched >= full or state.matched >= cfg.floor:
            c, d = state.left, state.right
            cols = np.column_stack([paired.sample1[c], paired.sample2[c], s3[d]])
            return cols, state
    raise InfeasibleError(f"third-component pairing reached only {best} matches "
                          f"after {cap + 1} draws (need {cfg.floor})")


def finalize_last_component(partial: np.ndarray, last_bounds) -> tuple:
    """Close each row with ``1 - sum(row)`` and drop rows outside ``last_bounds``.

    Returns ``(rows, removed)``.
    """
    partial = np.asarray(partial, dtype=float)
    last = 1.0 - partial.sum(axis=1)
    ok = (last >= last_bounds.lower) & (last <= last_bounds.upper)
    rows = np.column_stack([partial, last])[ok]
    return rows, int((~ok).sum())


def conditioned_sample(bounds: Sequence, cfg: SamplerConfig, rng) -> ConditionedSampleSet:
    """Run the conditioned sampler for bounds given in sampling order.

    Raises
    ------
    InfeasibleError
        Every attempt failed in a pairing stage, or the dimension-2 case
        exceeded its rejection allowance.
    """
    d = len(bounds)
    gen = _generator(rng)
    if d == 1:
        return sample_dim1(bounds, cfg, gen)
    if d == 2:
        return sample_dim2(bounds, cfg, gen)
    if d > 4:
        raise ValueError(f"conditioned sampling supports at most 4 components, got {d}")

    diagnostics = []
    for attempt in range(cfg.max_attempts):
        paired = sample_dim_gt2(bounds, cfg, gen)
        if d == 3:
            partial = np.column_stack([paired.sample1, paired.sample2])
            break
        try:
            partial, _ = extend_dim_gt3(paired, bounds[2], cfg, gen)
            break
        except InfeasibleError as exc:
            diagnostics.append(f"attempt {attempt + 1}: {exc}")
    else:
        raise InfeasibleError(f"no feasible draw after {cfg.max_attempts} attempts; last: "
                              + diagnostics[-1])

    rows, removed = finalize_last_component(partial, bounds[-1])
    return ConditionedSampleSet(
        rows, cfg.n_samp,
        pairing_rejections=cfg.n_samp - partial.shape[0],
        bound_rejections=removed,
        diagnostics=diagnostics,
    )
