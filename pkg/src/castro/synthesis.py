"""
Manufacturability post-processing of group samples.

``pairs`` groups may only contain an allowed single component or an allowed
pair; ``one_hot`` groups contain exactly one component.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from dataclasses import dataclass

import numpy as np

from castro.errors import InfeasibleError
from castro.problem import SynthesisConstraint

SINGLE_ROUNDED = "single_rounded"
PAIR_KEPT = "pair_kept"
ONE_HOT = "one_hot"
FALLBACK_PAIR = "fallback_pair"
FALLBACK_SINGLE = "fallback_single"


@dataclass(frozen=True)
class SynthesisOutcome:
    row: np.ndarray
    support: tuple
    rule_applied: str


def _single(n: int, k: int, rule: str) -> SynthesisOutcome:
    row = np.zeros(n)
    row[k] = 1.0
    return SynthesisOutcome(row, (k,), rule)


def _pair(x: np.ndarray, i: int, k: int, rule: str) -> SynthesisOutcome:
    row = np.zeros(x.size)
    # exact rational ratio, so e.g. (0.3, 0.6) gives exactly (1/3, 2/3) after rounding
    a, b = Fraction(float(x[i])), Fraction(float(x[k]))
    row[i] = float(a / (a + b))
    row[k] = float(b / (a + b))
    if row[i] + row[k] != 1.0:
        row[k] = 1.0 - row[i]
    return SynthesisOutcome(row, tuple(sorted((i, k))), rule)


def apply_onehot_synthesis(row) -> SynthesisOutcome:
    """Set the largest component to one and the rest to zero (lowest index wins ties)."""
    x = np.asarray(row, dtype=float)
    return _single(x.size, int(np.argmax(x)), ONE_HOT)


def apply_pair_synthesis(row, constraint: SynthesisConstraint) -> SynthesisOutcome:
    """Project a group row onto an allowed single or pair.

    When the largest component reaches 0.5 it is kept together with the
    second largest if that pair is allowed (the two are rescaled to sum to
    one), otherwise it is rounded up to one. When no component reaches 0.5
    the allowed pair or single with the greatest combined mass wins.

    Raises
    ------
    InfeasibleError
        The rule lands on a single that is not allowed.
    """
    x = np.asarray(row, dtype=float)
    n = x.size
    order = np.argsort(-x, kind="stable")
    top = int(order[0])
    if x[top] >= 0.5:
        if n > 1:
            second = int(order[1])
            if x[second] > 0 and constraint.pair_allowed(top, second):
                return _pair(x, top, second, PAIR_KEPT)
        if not constraint.single_allowed(top):
            raise InfeasibleError(f"component {top} dominates but is not an allowed single "
                                  "and has no allowed partner")
        return _single(n, top, SINGLE_ROUNDED)

    best, best_mass = None, -1.0
    for i, k in itertools.combinations(range(n), 2):
        if constraint.pair_allowed(i, k) and x[i] + x[k] > best_mass:
            best, best_mass = (i, k), x[i] + x[k]
    for i in range(n):
        if constraint.single_allowed(i) and x[i] > best_mass:
            best, best_mass = (i,), x[i]
    if best is None or best_mass <= 0:
        raise InfeasibleError("row has no mass on any allowed single or pair")
    if len(best) == 2 and min(x[best[0]], x[best[1]]) <= 0:
        # a pair with an empty member is really a single
        best = (best[0] if x[best[0]] > 0 else best[1],)
        if not constraint.single_allowed(best[0]):
            raise InfeasibleError(f"component {best[0]} is not an allowed single")
    if len(best) == 1:
        return _single(n, best[0], FALLBACK_SINGLE)
    return _pair(x, *best, FALLBACK_PAIR)


def apply_synthesis(rows, constraint: SynthesisConstraint) -> tuple:
    """Apply a group's synthesis rule to every row.

    Returns ``(rows, rules)``; rows the rule rejects are dropped and reported
    with rule ``"rejected"`` in ``rules``.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    out, rules = [], []
    for r in rows:
        try:
            res = (apply_onehot_synthesis(r) if constraint.mode == "one_hot"
                   else apply_pair_synthesis(r, constraint))
        except InfeasibleError:
            rules.append("rejected")
            continue
        out.append(res.row)
        rules.append(res.rule_applied)
    return np.array(out).reshape(-1, rows.shape[1]), rules
