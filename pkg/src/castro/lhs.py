"""
Latin hypercube engines on the unit cube.

Two engines are provided: plain LHS and LHS with multidimensional uniformity
(LHSMDU, Deutsch & Deutsch 2012), which oversamples uniform candidates, thins
them by repeatedly dropping the most crowded one, and then snaps the survivors
onto Latin strata by rank.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

_BELOW_ONE = np.nextafter(1.0, 0.0)


class Engine(str, enum.Enum):
    LHS = "lhs"
    LHSMDU = "lhsmdu"

    @property
    def label(self) -> str:
        return self.name


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream addressed by (seed, stream path).

    ``stream_id`` may be a single non-negative integer or a tuple of them;
    :meth:`child` appends one level so that nested tasks (subproblem, engine,
    permutation, ...) each get an independent, deterministic generator.
    """

    seed: int
    stream_id: tuple = ()

    def __post_init__(self):
        sid = self.stream_id
        if isinstance(sid, (int, np.integer)):
            sid = (int(sid),)
        sid = tuple(int(s) for s in sid)
        if any(s < 0 for s in sid):
            raise ValueError("stream ids must be non-negative")
        object.__setattr__(self, "stream_id", sid)

    def child(self, i: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + (int(i),))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=int(self.seed) & (2**64 - 1), spawn_key=self.stream_id)
        return np.random.Generator(np.random.PCG64(seq))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


def _stratify(strata: np.ndarray, u: np.ndarray, n: int) -> np.ndarray:
    # float rounding can push (k + u) / n across a stratum edge; nudge it back
    x = np.minimum((strata + u) / n, _BELOW_ONE)
    for _ in range(8):
        s = np.floor(x * n)
        low, high = s < strata, s > strata
        if not (low.any() or high.any()):
            break
        x = np.where(low, np.nextafter(x, 1.0), x)
        x = np.where(high, np.nextafter(x, 0.0), x)
    return x


def lhs_unit(n: int, d: int, rng) -> np.ndarray:
    """Standard Latin hypercube of ``n`` points in ``[0, 1)^d``."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    gen = _as_generator(rng)
    strata = np.column_stack([gen.permutation(n) for _ in range(d)])
    return _stratify(strata, gen.random((n, d)), n)


def _eliminate_crowded(points: np.ndarray, n: int) -> np.ndarray:
    dist = squareform(pdist(points))
    np.fill_diagonal(dist, np.inf)
    alive = np.arange(points.shape[0])
    while alive.size > n:
        sub = dist[np.ix_(alive, alive)]
        k = min(2, alive.size - 1)
        crowding = np.partition(sub, k - 1, axis=1)[:, :k].mean(axis=1)
        alive = np.delete(alive, int(np.argmin(crowding)))
    return points[alive]


def lhsmdu_unit(n: int, d: int, rng, oversample: int = 5) -> np.ndarray:
    """Latin hypercube with multidimensional uniformity in ``[0, 1)^d``.

    ``oversample * n`` uniform candidates are drawn; the candidate with the
    smallest mean distance to its two nearest remaining neighbours is removed
    until ``n`` remain. Each column of the survivors is then replaced by
    ``(rank + u) / n`` with ``u`` uniform, which restores the Latin property
    exactly while keeping the survivors' joint ordering.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    if oversample < 2:
        raise ValueError("oversample must be at least 2")
    gen = _as_generator(rng)
    candidates = gen.random((oversample * n, d))
    survivors = _eliminate_crowded(candidates, n)
    ranks = np.argsort(np.argsort(survivors, axis=0, kind="stable"), axis=0, kind="stable")
    return _stratify(ranks, gen.random((n, d)), n)


def unit_design(engine: Engine, n: int, d: int, rng, oversample: int = 5) -> np.ndarray:
    if Engine(engine) is Engine.LHS:
        return lhs_unit(n, d, rng)
    return lhsmdu_unit(n, d, rng, oversample)


def scale_to_bounds(design: np.ndarray, bounds: Sequence) -> np.ndarray:
    """Affinely map unit-cube columns onto ``[lower, upper]`` per component."""
    design = np.asarray(design, dtype=float)
    if design.ndim != 2 or design.shape[1] != len(bounds):
        raise ValueError(f"design has {design.shape[-1]} columns, bounds give {len(bounds)}")
    lo = np.array([b.lower for b in bounds])
    hi = np.array([b.upper for b in bounds])
    return np.minimum(lo + design * (hi - lo), hi)


def latin_property_holds(design: np.ndarray) -> bool:
    n = design.shape[0]
    strata = np.floor(np.asarray(design) * n).astype(int)
    return all(np.array_equal(np.sort(col), np.arange(n)) for col in strata.T)
