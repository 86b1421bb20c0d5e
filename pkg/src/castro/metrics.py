"""
Space-filling diagnostics: Hickernell's centered and wrap-around L2
discrepancies, mean per-dimension variance, and a standardized 2-D PCA
projection for plotting.

All uniformity measures expect points in the unit cube; use
:func:`to_unit_cube` to map compositions through their component bounds.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

SCOPES = ("selected", "selected_plus_data", "pool")


@dataclass(frozen=True)
class MetricsReport:
    scope: str
    point_count: int
    cd: float
    wd: float
    variance: Optional[float]

    def as_dict(self) -> dict:
        return asdict(self)


def _unit_design(design) -> np.ndarray:
    x = np.atleast_2d(np.asarray(design, dtype=float))
    if x.size == 0:
        raise ValueError("design is empty")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("discrepancy needs points in [0, 1]^d")
    return x


def centered_l2_discrepancy(design) -> float:
    x = _unit_design(design)
    n, d = x.shape
    dev = np.abs(x - 0.5)
    single = np.prod(1.0 + 0.5 * dev - 0.5 * dev ** 2, axis=1).sum()
    diff = np.abs(x[:, None, :] - x[None, :, :])
    pair = np.prod(1.0 + 0.5 * dev[:, None, :] + 0.5 * dev[None, :, :] - 0.5 * diff, axis=2).sum()
    sq = (13.0 / 12.0) ** d - 2.0 / n * single + pair / n ** 2
    return float(np.sqrt(max(sq, 0.0)))


def wraparound_l2_discrepancy(design) -> float:
    x = _unit_design(design)
    n, d = x.shape
    diff = np.abs(x[:, None, :] - x[None, :, :])
    pair = np.prod(1.5 - diff * (1.0 - diff), axis=2).sum()
    sq = -(4.0 / 3.0) ** d + pair / n ** 2
    return float(np.sqrt(max(sq, 0.0)))


def design_variance(design) -> float:
    """Mean over columns of the unbiased sample variance."""
    x = np.atleast_2d(np.asarray(design, dtype=float))
    if x.shape[0] < 2:
        raise ValueError("variance needs at least 2 points")
    return float(np.var(x, axis=0, ddof=1).mean())


def to_unit_cube(rows, bounds: Sequence, tol: float = 1e-9) -> np.ndarray:
    """Min-max scale each column by its component bounds.

    Degenerate columns (lower == upper) map to 0. Points more than ``tol``
    outside the bounds raise ``ValueError`` rather than being clipped.
    """
    x = np.atleast_2d(np.asarray(rows, dtype=float))
    lo = np.array([b.lower for b in bounds])
    width = np.array([b.upper - b.lower for b in bounds])
    safe = np.where(width > 0, width, 1.0)
    u = np.where(width > 0, (x - lo) / safe, 0.0)
    if np.any(u < -tol) or np.any(u > 1.0 + tol):
        raise ValueError("points outside the component bounds cannot be scaled to the unit cube")
    return np.clip(u, 0.0, 1.0)


def _report(scope, unit) -> MetricsReport:
    unit = np.asarray(unit)
    var = design_variance(unit) if unit.shape[0] >= 2 else None
    return MetricsReport(scope, int(unit.shape[0]), centered_l2_discrepancy(unit),
                         wraparound_l2_discrepancy(unit), var)


def metrics_table(selected, data, pool, bounds: Sequence) -> list:
    """CD, WD and variance for the selected rows, selected rows plus data, and the pool.

    Inputs are compositions; they are scaled to the unit cube through
    ``bounds`` first. Variance is None for scopes with fewer than 2 points.
    """
    sel = to_unit_cube(selected, bounds)
    dat = to_unit_cube(data, bounds) if data is not None and np.size(data) else sel[:0]
    both = np.vstack([sel, dat])
    return [
        _report("selected", sel),
        _report("selected_plus_data", both),
        _report("pool", to_unit_cube(pool, bounds)),
    ]


@dataclass(frozen=True)
class Projection:
    coords: np.ndarray
    explained_variance_ratio: np.ndarray
    components: np.ndarray
    kept_columns: tuple


def pca_project_2d(rows) -> Projection:
    """Standardize columns and project onto the two leading principal axes.

    Zero-variance columns are dropped (listed by omission in
    ``kept_columns``). Each axis is signed so its largest-magnitude loading is
    positive.
    """
    x = np.atleast_2d(np.asarray(rows, dtype=float))
    if x.shape[0] < 2:
        raise ValueError("projection needs at least 2 rows")
    std = x.std(axis=0)
    keep = np.flatnonzero(std > 1e-12)
    if keep.size < 2:
        raise ValueError("fewer than 2 columns vary; nothing to project")
    z = (x[:, keep] - x[:, keep].mean(axis=0)) / std[keep]
    cov = np.cov(z, rowvar=False)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    axes = evecs[:, :2].copy()
    for j in range(2):
        if axes[np.argmax(np.abs(axes[:, j])), j] < 0:
            axes[:, j] = -axes[:, j]
    total = evals.sum()
    ratio = evals[:2] / total if total > 0 else np.zeros(2)
    return Projection(z @ axes, ratio, axes.T, tuple(int(k) for k in keep))
