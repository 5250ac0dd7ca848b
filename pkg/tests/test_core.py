import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from mohillvallea.core import (
    BudgetExhausted,
    EvaluationCounter,
    Solution,
    dominates,
    fast_nondominated_sort,
    make_rng,
    nondominated_filter,
    nondominated_mask,
)


def sol(f, x=None):
    f = np.asarray(f, dtype=float)
    return Solution(x=np.zeros(2) if x is None else np.asarray(x, float), f=f)


class TestDominates:
    def test_strict_improvement_in_both(self):
        assert dominates(sol((0, 0)), sol((1, 1)))

    def test_equal_vectors_never_dominate(self):
        assert not dominates(sol((0, 0)), sol((0, 0)))

    def test_incomparable_pair(self):
        assert not dominates(sol((0, 1)), sol((1, 0)))
        assert not dominates(sol((1, 0)), sol((0, 1)))

    def test_weak_improvement_dominates(self):
        assert dominates(sol((0, 1)), sol((1, 1)))

    def test_length_mismatch_raises(self):
        with pytest.raises(ValueError):
            dominates(sol((0, 0)), sol((0, 0, 0)))

    @given(
        st.lists(st.floats(-10, 10), min_size=2, max_size=4),
        st.lists(st.floats(-10, 10), min_size=2, max_size=4),
    )
    def test_antisymmetry(self, fa, fb):
        if len(fa) != len(fb):
            return
        a, b = sol(fa), sol(fb)
        if dominates(a, b):
            assert not dominates(b, a)

    @given(st.lists(st.lists(st.floats(0, 5), min_size=2, max_size=2), min_size=1, max_size=24))
    @settings(max_examples=60)
    def test_mask_matches_oracle(self, rows):
        F = np.array(rows)
        assert np.array_equal(nondominated_mask(F), oracles.nondominated_mask(F))


class TestNondominatedFilter:
    def test_dominated_point_removed(self):
        pop = [sol((0, 1)), sol((1, 0)), sol((1, 1))]
        kept = nondominated_filter(pop)
        assert kept == pop[:2]

    def test_singleton(self):
        pop = [sol((0, 0))]
        assert nondominated_filter(pop) == pop

    def test_empty(self):
        assert nondominated_filter([]) == []

    def test_matches_pairwise_oracle_on_random_points(self):
        rng = make_rng(7)
        F = rng.uniform(0, 1, size=(20, 2))
        pop = [sol(f) for f in F]
        expected = [p for p, keep in zip(pop, oracles.nondominated_mask(F)) if keep]
        assert nondominated_filter(pop) == expected

    def test_idempotent(self):
        rng = make_rng(3)
        pop = [sol(f) for f in rng.uniform(0, 1, size=(50, 3))]
        once = nondominated_filter(pop)
        assert nondominated_filter(once) == once

    def test_sweep_path_equals_pairwise_path(self):
        # large two-objective inputs take the sort-sweep branch
        rng = make_rng(11)
        F = np.round(rng.uniform(0, 1, size=(600, 2)), 2)  # rounding forces ties
        assert np.array_equal(nondominated_mask(F), oracles.nondominated_mask(F))


class TestFrontSort:
    def test_fronts_match_peeling_oracle(self):
        rng = make_rng(5)
        F = rng.uniform(0, 1, size=(50, 2))
        fronts = fast_nondominated_sort(F)
        expected = oracles.front_peel(F)
        assert len(fronts) == len(expected)
        for ours, theirs in zip(fronts, expected):
            assert set(int(i) for i in ours) == theirs

    def test_total_order_chain(self):
        F = np.array([[i, i] for i in range(6)], dtype=float)
        fronts = fast_nondominated_sort(F)
        assert [list(f) for f in fronts] == [[0], [1], [2], [3], [4], [5]]


class TestEvaluationCounter:
    def test_counts_and_remaining(self):
        counter = EvaluationCounter(budget=10)
        counter.charge(3)
        assert counter.used == 3
        assert counter.remaining == 7

    def test_budget_exceeded_raises_without_charging(self):
        counter = EvaluationCounter(budget=5)
        counter.charge(5)
        with pytest.raises(BudgetExhausted):
            counter.charge(1)
        assert counter.used == 5

    def test_unlimited(self):
        counter = EvaluationCounter()
        counter.charge(10**6)
        assert counter.remaining is None

    def test_invalid_budget(self):
        with pytest.raises(ValueError):
            EvaluationCounter(budget=0)

    def test_counter_matches_instrumented_problem(self):
        # the problem-side call count must agree with the run's counter
        from mohillvallea.optimizer import RunConfig, run
        from mohillvallea.problems import get_problem

        problem = get_problem("mindist2")
        calls = {"rows": 0}
        original = type(problem).evaluate_batch

        class Instrumented(type(problem)):
            pass

        instrumented = get_problem("mindist2")
        inner = instrumented._evaluate

        def counting(problem_, X):
            calls["rows"] += len(X)
            return inner(problem_, X)

        object.__setattr__(instrumented, "_evaluate", counting)
        result = run(RunConfig(problem=instrumented, budget=2000, seed=0))
        assert calls["rows"] == result.evals_used == 2000
        assert original is type(problem).evaluate_batch


def test_rng_determinism():
    a = make_rng(123).standard_normal(8)
    b = make_rng(123).standard_normal(8)
    assert np.array_equal(a, b)
