import math

import numpy as np
import pytest

from castro.conditioned import SamplerConfig
from castro.errors import CastroWarning, InfeasibleError
from castro.lhs import Engine, RngStream
from castro.permutations import (
    enumerate_bound_permutations,
    reorder_columns,
    run_all_permutations,
    select_by_distance_incremental,
)
from castro.problem import ComponentBounds

CASE_4D = [ComponentBounds("PA-56", 0.8, 1.0), ComponentBounds("PhA", 0.0, 0.05),
           ComponentBounds("amino", 0.0, 0.1), ComponentBounds("metal", 0.0, 0.14)]


def test_enumeration():
    assert enumerate_bound_permutations(2).all_perms == ((0, 1), (1, 0))
    plan = enumerate_bound_permutations(4, 144)
    assert len(plan.all_perms) == 24 and plan.per_perm_n_samp == 6
    assert plan.all_perms[0] == (0, 1, 2, 3)
    assert list(plan.all_perms) == sorted(plan.all_perms)
    assert len(enumerate_bound_permutations(3).all_perms) == math.factorial(3)


def test_enumeration_limits():
    with pytest.raises(ValueError, match="partition"):
        enumerate_bound_permutations(5)
    with pytest.warns(CastroWarning, match="not a multiple"):
        plan = enumerate_bound_permutations(3, 20)
    assert plan.per_perm_n_samp == 3


def test_reorder_columns():
    x = np.array([[1.0, 2.0, 3.0]])
    np.testing.assert_array_equal(reorder_columns(x, (0, 1, 2)), x)
    np.testing.assert_array_equal(reorder_columns(x[:, :2], (1, 0)), [[2.0, 1.0]])
    # a -> slot 2, b -> slot 0, c -> slot 1
    np.testing.assert_array_equal(reorder_columns(x, (2, 0, 1)), [[2.0, 3.0, 1.0]])


def test_incremental_selection_examples():
    out = select_by_distance_incremental(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0], [0.1, 0.0]]), 1)
    np.testing.assert_array_equal(out[-1], [1.0, 0.0])
    pool = np.array([[0.0, 0.0], [1.0, 1.0]])
    new = np.array([[0.5, 0.5], [0.9, 0.9], [0.1, 0.1]])
    np.testing.assert_array_equal(select_by_distance_incremental(pool, new, 1)[-1], [0.5, 0.5])
    np.testing.assert_array_equal(select_by_distance_incremental(pool, new, 3), np.vstack([pool, new]))


def _check_rows(rows, bounds):
    np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-12, rtol=0)
    for j, b in enumerate(bounds):
        assert np.all((rows[:, j] >= b.lower) & (rows[:, j] <= b.upper))


def test_case_pools_are_feasible_in_original_order():
    cfg = SamplerConfig.from_budget(144, 24)
    pool = run_all_permutations(CASE_4D, cfg, RngStream(0))
    for engine in Engine:
        rows = pool.samples[engine]
        _check_rows(rows, CASE_4D)
        counts = pool.per_perm_counts(engine)
        assert len(counts) == 24 and sum(counts) == rows.shape[0] <= 144
    assert not np.array_equal(pool.lhs_samples[:5], pool.lhsmdu_samples[:5])


def test_two_component_pool():
    b = [ComponentBounds("a", 0, 1), ComponentBounds("b", 0, 1)]
    pool = run_all_permutations(b, SamplerConfig.from_budget(4, 2), RngStream(1))
    for engine in Engine:
        assert pool.samples[engine].shape == (4, 2)
        _check_rows(pool.samples[engine], b)


def test_worker_count_does_not_change_results():
    cfg = SamplerConfig.from_budget(144, 24)
    a = run_all_permutations(CASE_4D, cfg, RngStream(9), workers=1)
    b = run_all_permutations(CASE_4D, cfg, RngStream(9), workers=8)
    for engine in Engine:
        assert np.array_equal(a.samples[engine], b.samples[engine])


def test_num_select_filters_each_later_permutation():
    cfg = SamplerConfig.from_budget(144, 24)
    pool = run_all_permutations(CASE_4D, cfg, RngStream(2), engines=(Engine.LHS,),
                                all_select=False, num_select=2)
    counts = pool.per_perm_counts(Engine.LHS)
    expected = counts[0] + sum(min(2, c) for c in counts[1:])
    assert pool.lhs_samples.shape[0] == expected
    _check_rows(pool.lhs_samples, CASE_4D)
    with pytest.raises(ValueError):
        run_all_permutations(CASE_4D, cfg, RngStream(2), all_select=False)


def test_all_permutations_infeasible():
    b = [ComponentBounds("a", 0, 0.3), ComponentBounds("b", 0, 0.3), ComponentBounds("c", 0.4, 0.4)]
    cfg = SamplerConfig(n_samp=3, max_iter_dim2=3, max_attempts=1)
    with pytest.raises(InfeasibleError):
        run_all_permutations(b, cfg, RngStream(0))
