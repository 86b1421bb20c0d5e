"""Distance-based selection of candidates away from prior experiments."""

from __future__ import annotations

import warnings
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from castro.errors import CastroWarning


def distance_matrix(a, b) -> np.ndarray:
    """Euclidean distances between the rows of ``a`` and the rows of ``b``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]} columns")
    return cdist(a, b)


def farthest_from_data(candidates, data, k: int, min_mutual: Optional[float] = None,
                       return_index: bool = False):
    """Greedy max-min selection of ``k`` candidates.

    Each step takes the unselected candidate whose nearest neighbour among the
    data and the already selected rows is farthest away. With ``min_mutual``,
    candidates closer than that to a selected row are skipped, which may end
    the selection early (a warning is issued). Without data, the first pick
    is the candidate farthest from the candidates' centroid.

    Ties go to the lowest candidate index.
    """
    cand = np.asarray(candidates, dtype=float)
    n = cand.shape[0]
    if k > n:
        raise ValueError(f"cannot select {k} rows from {n} candidates")
    data = np.asarray(data, dtype=float).reshape(-1, cand.shape[1]) if data is not None else None
    if data is not None and data.shape[0]:
        nearest = distance_matrix(cand, data).min(axis=1)
    else:
        nearest = np.full(n, np.inf)
    available = np.ones(n, dtype=bool)
    picks = []
    while len(picks) < k and available.any():
        if np.isinf(nearest[available]).all():
            centre = cand.mean(axis=0)
            score = distance_matrix(cand, centre[None, :])[:, 0]
        else:
            score = nearest
        j = int(np.argmax(np.where(available, score, -np.inf)))
        picks.append(j)
        available[j] = False
        dist_j = distance_matrix(cand, cand[j:j + 1])[:, 0]
        nearest = np.minimum(nearest, dist_j)
        if min_mutual is not None:
            available &= dist_j >= min_mutual
    if len(picks) < k:
        warnings.warn(f"min_mutual={min_mutual} left only {len(picks)} of {k} requested rows",
                      CastroWarning, stacklevel=2)
    idx = np.array(picks, dtype=int)
    return (cand[idx], idx) if return_index else cand[idx]


def round_and_renormalize(samples, decimals: int, bounds=None):
    """Round to ``decimals`` places (half to even) and restore unit row sums.

    The rounding residual of each row goes to its largest component, computed
    in integer units of ``10**-decimals`` so the sum is exact at that
    precision. Returns ``(rounded, flagged)`` where ``flagged`` marks rows
    that leave ``bounds`` after the adjustment (all False without bounds).
    """
    if decimals < 0:
        raise ValueError("decimals must be non-negative")
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    scale = 10 ** decimals
    units = np.rint(x * scale).astype(np.int64)
    residual = scale - units.sum(axis=1)
    rows = np.arange(x.shape[0])
    units[rows, np.argmax(x, axis=1)] += residual
    rounded = units / scale
    flagged = np.zeros(x.shape[0], dtype=bool)
    if bounds is not None:
        lo = np.array([b.lower for b in bounds])
        hi = np.array([b.upper for b in bounds])
        tol = 0.5 / scale
        flagged = np.any((rounded < lo - tol) | (rounded > hi + tol), axis=1)
    return rounded, flagged
