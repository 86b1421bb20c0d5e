import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from castro.errors import InfeasibleError
from castro.problem import SynthesisConstraint
from castro.synthesis import (
    FALLBACK_PAIR,
    PAIR_KEPT,
    SINGLE_ROUNDED,
    apply_onehot_synthesis,
    apply_pair_synthesis,
    apply_synthesis,
)

# CS, BN, THAM, MEL
AMINO = SynthesisConstraint(
    mode="pairs",
    allowed_pairs=frozenset({frozenset({3, 0}), frozenset({2, 0}), frozenset({3, 2})}),
    allowed_singles=frozenset({0, 1, 2, 3}),
)
ALLOWED_SUPPORTS = {(0,), (1,), (2,), (3,), (0, 3), (0, 2), (2, 3)}


def test_pair_kept_and_renormalized():
    out = apply_pair_synthesis([0.3, 0.05, 0.05, 0.6], AMINO)
    assert out.rule_applied == PAIR_KEPT and out.support == (0, 3)
    assert out.row.tolist() == [1 / 3, 0.0, 0.0, 2 / 3]


def test_disallowed_partner_rounds_to_single():
    out = apply_pair_synthesis([0.1, 0.35, 0.0, 0.55], AMINO)
    assert out.rule_applied == SINGLE_ROUNDED
    assert out.row.tolist() == [0.0, 0.0, 0.0, 1.0]


def test_single_unchanged():
    out = apply_pair_synthesis([1.0, 0.0, 0.0, 0.0], AMINO)
    assert out.row.tolist() == [1.0, 0.0, 0.0, 0.0] and out.support == (0,)


def test_fallback_picks_heaviest_allowed_combination():
    # no component reaches 0.5; CS+THAM = 0.7 beats MEL+CS = 0.55 and BN alone
    out = apply_pair_synthesis([0.4, 0.15, 0.3, 0.15], AMINO)
    assert out.rule_applied == FALLBACK_PAIR and out.support == (0, 2)
    np.testing.assert_allclose(out.row, [4 / 7, 0, 3 / 7, 0])


def test_dominant_component_without_allowed_single():
    c = SynthesisConstraint(mode="pairs", allowed_pairs=frozenset({frozenset({0, 1})}),
                            allowed_singles=frozenset())
    with pytest.raises(InfeasibleError):
        apply_pair_synthesis([0.0, 0.0, 1.0], c)
    rows, rules = apply_synthesis([[0.0, 0.0, 1.0], [0.6, 0.4, 0.0]], c)
    assert rules == ["rejected", PAIR_KEPT] and rows.shape == (1, 3)


def test_onehot_examples():
    assert apply_onehot_synthesis([0.2, 0.5, 0.3]).row.tolist() == [0, 1, 0]
    assert apply_onehot_synthesis([1, 0, 0]).row.tolist() == [1, 0, 0]
    assert apply_onehot_synthesis([0.5, 0.5, 0]).row.tolist() == [1, 0, 0]


def _simplex(gen, n, d, sparse=True):
    x = gen.dirichlet(np.ones(d), size=n)
    if sparse:
        mask = gen.random((n, d)) < 0.3
        x = np.where(mask, 0.0, x)
        empty = x.sum(axis=1) == 0
        x[empty, gen.integers(d, size=empty.sum())] = 1.0
        x /= x.sum(axis=1, keepdims=True)
    return x


def test_random_amino_rows_land_on_allowed_supports():
    rows = _simplex(np.random.default_rng(1), 2000, 4)
    out, rules = apply_synthesis(rows, AMINO)
    assert "rejected" not in rules
    for r in out:
        assert tuple(np.flatnonzero(r)) in ALLOWED_SUPPORTS
        assert r.sum() == 1.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=3, max_size=3).filter(lambda v: sum(v) > 0))
def test_onehot_property(v):
    x = np.array(v) / sum(v)
    out = apply_onehot_synthesis(x)
    assert out.row.sum() == 1.0 and np.count_nonzero(out.row) == 1
    assert out.support == (int(np.argmax(x)),)


@settings(max_examples=40, deadline=None)
@given(st.permutations(range(3)), st.lists(st.floats(0.01, 1), min_size=3, max_size=3, unique=True))
def test_onehot_commutes_with_relabeling(perm, v):
    x = np.array(v)
    perm = list(perm)
    assert np.array_equal(apply_onehot_synthesis(x[perm]).row, apply_onehot_synthesis(x).row[perm])
