import math

import numpy as np
import pytest

from mohillvallea.core import (
    ORIGIN_ELITE,
    ORIGIN_HV_TEST,
    EvaluationCounter,
    Solution,
    make_rng,
)
from mohillvallea import hillvalley as hv
from mohillvallea.hillvalley import (
    Cluster,
    ClusteringStats,
    HVTestCache,
    edge_length,
    elite_shortcut_policy,
    hill_valley_test,
    multi_objective_clustering,
    single_objective_clustering,
)
from mohillvallea.problems import Evaluator, get_problem, sample_uniform


def make_evaluator(problem):
    return Evaluator(problem, EvaluationCounter())


def make_solutions(problem, X):
    X = np.atleast_2d(np.asarray(X, float))
    F = problem.evaluate_batch(X)
    return [Solution(x, f) for x, f in zip(X, F)]


class TestHillValleyTest:
    def test_identical_endpoints(self, mindist2):
        evaluate = make_evaluator(mindist2)
        a, b = make_solutions(mindist2, [[1.0, 1.0], [1.0, 1.0]])
        same, points = hill_valley_test(a, b, 3, 0, evaluate)
        assert same and points == []
        assert evaluate.counter.used == 0  # no probe evaluations for x == y

    def test_within_valley_passes(self, mindist2):
        # f0 along the segment x0=-2 never exceeds the worse endpoint (2)
        evaluate = make_evaluator(mindist2)
        a, b = make_solutions(mindist2, [[-2.0, -1.0], [-2.0, 1.0]])
        assert a.f[0] == 0.0 and b.f[0] == 2.0
        same, points = hill_valley_test(a, b, 3, 0, evaluate)
        assert same and len(points) == 3

    def test_hill_between_valleys_fails(self, mindist2):
        # endpoints have f0 = 1, the midpoint (0,0) has f0 = sqrt(5) > 1
        evaluate = make_evaluator(mindist2)
        a, b = make_solutions(mindist2, [[-2.0, 0.0], [2.0, 0.0]])
        assert a.f[0] == pytest.approx(1.0) and b.f[0] == pytest.approx(1.0)
        same, points = hill_valley_test(a, b, 1, 0, evaluate)
        assert not same
        assert len(points) == 1
        assert points[0].f[0] == pytest.approx(math.sqrt(5.0))

    def test_probe_points_tagged(self, mindist2):
        evaluate = make_evaluator(mindist2)
        a, b = make_solutions(mindist2, [[-2.0, -1.0], [-2.0, 1.0]])
        _, points = hill_valley_test(a, b, 2, 0, evaluate)
        assert all(p.origin == ORIGIN_HV_TEST for p in points)


class TestEdgeLength:
    def test_unit_square_corners(self):
        X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        assert edge_length(X, 1.0) == pytest.approx(0.5)

    def test_unit_cube(self):
        rng = make_rng(0)
        X = rng.uniform(0, 1, size=(64, 3))
        X[0] = 0.0
        X[1] = 1.0  # pin the bounding box to the unit cube
        assert edge_length(X, 1.0) == pytest.approx((1 / 64) ** (1 / 3))

    def test_duplicated_population_shrinks(self):
        rng = make_rng(1)
        X = rng.uniform(0, 1, size=(32, 2))
        doubled = np.vstack([X, X])
        assert edge_length(doubled, 1.0) == pytest.approx(
            edge_length(X, 1.0) * 2 ** (-1 / 2)
        )

    def test_zero_extent_coordinate_stays_finite(self):
        X = np.array([[0.0, 5.0], [1.0, 5.0], [0.5, 5.0]])
        value = edge_length(X, 10.0)
        assert math.isfinite(value) and value > 0

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            edge_length(np.zeros((1, 2)), 1.0)


class TestTestPointCount:
    @pytest.mark.parametrize(
        "distance,edge,expected", [(0.4, 0.5, 1), (0.5, 0.5, 2), (1.7, 0.5, 4)]
    )
    def test_formula(self, distance, edge, expected):
        assert hv.test_point_count(distance, edge) == expected


class _QuadraticProblem:
    """Single-objective convex bowl wrapped as a bi-objective-free problem."""

    def __init__(self, n=2):
        self.n = n
        self.domain_width = np.full(n, 4.0)

    def evaluate_batch(self, X):
        X = np.atleast_2d(X)
        return (X**2).sum(axis=1, keepdims=True)


class TestSingleObjectiveClustering:
    def test_unimodal_bowl_single_cluster(self):
        problem = _QuadraticProblem()
        rng = make_rng(3)
        X = rng.uniform(-2, 2, size=(120, 2))
        F = problem.evaluate_batch(X)
        pop = [Solution(x, f) for x, f in zip(X, F)]
        counter = EvaluationCounter()

        def evaluate(Q):
            counter.charge(len(np.atleast_2d(Q)))
            return problem.evaluate_batch(Q)

        clusters = single_objective_clustering(pop, 0, evaluate, 4.0)
        assert len(clusters) == 1

    def test_convexity_no_interior_exceeds_endpoints(self):
        # convex functions cannot produce a hill between two points
        rng = make_rng(5)
        for _ in range(100):
            a, b = rng.uniform(-2, 2, size=(2, 3))
            fa, fb = (a**2).sum(), (b**2).sum()
            worst = max(fa, fb)
            for k in range(1, 6):
                xk = a + (k / 6) * (b - a)
                assert (xk**2).sum() <= worst + 1e-12

    def test_population_of_one(self, mindist2):
        pop = make_solutions(mindist2, [[0.0, 0.0]])
        clusters = single_objective_clustering(
            pop, 0, make_evaluator(mindist2), mindist2.domain_width
        )
        assert len(clusters) == 1 and clusters[0].members == pop

    def test_mindist_f0_two_dominant_clusters(self, mindist2):
        # the first objective has two valleys separated at x0 = 0
        rng = make_rng(11)
        pop = sample_uniform(mindist2, 3000, rng)
        clusters = single_objective_clustering(
            pop, 0, make_evaluator(mindist2), mindist2.domain_width
        )
        clusters.sort(key=len, reverse=True)
        assert sum(len(c) for c in clusters[:2]) >= 0.9 * 3000
        means = [c.mean[0] for c in clusters[:2]]
        assert min(means) < 0 < max(means)

    def test_deterministic(self, mindist2):
        pop = sample_uniform(mindist2, 200, make_rng(7))
        runs = []
        for _ in range(2):
            clusters = single_objective_clustering(
                pop, 0, make_evaluator(mindist2), mindist2.domain_width
            )
            runs.append([tuple(id(s) for s in c.members) for c in clusters])
        assert runs[0] == runs[1]


class TestMultiObjectiveClustering:
    def test_single_objective_equivalence(self):
        # with one objective the intersection step is the identity
        problem = _QuadraticProblem()
        rng = make_rng(9)
        X = rng.uniform(-2, 2, size=(80, 2))
        F = problem.evaluate_batch(X)
        pop = [Solution(x, f) for x, f in zip(X, F)]

        def evaluate(Q):
            return problem.evaluate_batch(Q)

        mo = multi_objective_clustering(pop, evaluate, 4.0)
        so = single_objective_clustering(pop, 0, evaluate, 4.0)
        mo_sets = {frozenset(id(s) for s in c.members if s in pop) for c in mo}
        so_sets = {frozenset(id(s) for s in c.members) for c in so}
        assert mo_sets == so_sets

    def test_identical_x_always_together(self, mindist2):
        pop = make_solutions(mindist2, [[1.0, 0.5]] * 2 + [[-1.0, 0.0]])
        clusters = multi_objective_clustering(
            pop, make_evaluator(mindist2), mindist2.domain_width
        )
        label = {}
        for c in clusters:
            for s in c.members:
                label[id(s)] = c.id
        assert label[id(pop[0])] == label[id(pop[1])]

    def test_partition_and_refinement(self, mindist2):
        pop = sample_uniform(mindist2, 300, make_rng(13))
        cache = HVTestCache()
        evaluate = make_evaluator(mindist2)
        clusters = multi_objective_clustering(
            pop, evaluate, mindist2.domain_width, cache=cache
        )
        # partition: original members covered exactly once (probes excluded)
        seen = {}
        for c in clusters:
            for s in c.members:
                if s.origin != ORIGIN_HV_TEST:
                    assert id(s) not in seen
                    seen[id(s)] = c.id
        assert len(seen) == len(pop)
        # refinement: every final cluster lies inside one cluster per objective
        for objective in range(2):
            so = single_objective_clustering(
                pop, objective, make_evaluator(mindist2), mindist2.domain_width
            )
            so_label = {}
            for c in so:
                for s in c.members:
                    so_label[id(s)] = c.id
            for c in clusters:
                labels = {
                    so_label[id(s)] for s in c.members if s.origin != ORIGIN_HV_TEST
                }
                assert len(labels) == 1

    def test_warm_cache_needs_no_new_evaluations(self, mindist2):
        pop = sample_uniform(mindist2, 150, make_rng(17))
        cache = HVTestCache()
        stats1 = ClusteringStats()
        multi_objective_clustering(
            pop, make_evaluator(mindist2), mindist2.domain_width,
            cache=cache, stats=stats1,
        )
        assert stats1.points_evaluated > 0
        stats2 = ClusteringStats()
        counter = EvaluationCounter()
        multi_objective_clustering(
            pop, Evaluator(mindist2, counter), mindist2.domain_width,
            cache=cache, stats=stats2,
        )
        assert stats2.points_evaluated == 0
        assert counter.used == 0
        assert stats2.cache_hits > 0

    def test_budget_property_one_pass(self, mindist2):
        pop = sample_uniform(mindist2, 250, make_rng(19))
        stats = ClusteringStats()
        counter = EvaluationCounter()
        multi_objective_clustering(
            pop, Evaluator(mindist2, counter), mindist2.domain_width, stats=stats
        )
        n, n_pop = mindist2.n, len(pop)
        # at least one probe per non-seed solution; bounded by the
        # neighbor-count times mean probe-count envelope
        assert counter.used >= n_pop
        assert counter.used <= 20 * (n + 1) * n_pop * (1 + stats.mean_test_points)

    def test_four_niches_found(self, mindist2):
        # the four niches are the sectors delimited by the two
        # center-pair bisectors x1 = 2*x0 and x1 = -2*x0
        pop = sample_uniform(mindist2, 2000, make_rng(23))
        clusters = multi_objective_clustering(
            pop, make_evaluator(mindist2), mindist2.domain_width
        )
        clusters.sort(key=len, reverse=True)
        assert len(clusters) >= 4
        sectors = {
            (c.mean[1] > 2 * c.mean[0], c.mean[1] > -2 * c.mean[0])
            for c in clusters[:4]
        }
        assert len(sectors) == 4

    def test_probe_points_recycled_into_clusters(self, mindist2):
        pop = sample_uniform(mindist2, 200, make_rng(29))
        clusters = multi_objective_clustering(
            pop, make_evaluator(mindist2), mindist2.domain_width
        )
        probes = [
            s for c in clusters for s in c.members if s.origin == ORIGIN_HV_TEST
        ]
        assert probes  # same-cluster pair probes are appended

    def test_cluster_mean_matches_members(self, mindist2):
        pop = sample_uniform(mindist2, 120, make_rng(31))
        clusters = multi_objective_clustering(
            pop, make_evaluator(mindist2), mindist2.domain_width
        )
        for c in clusters:
            assert c.mean == pytest.approx(
                np.stack([s.x for s in c.members]).mean(axis=0)
            )


class TestElitePolicy:
    def test_same_subarchive_skips_test(self, mindist2):
        # two far-apart elites of one subarchive: a hill separates them,
        # but the shortcut policy unifies them without testing
        a, b = make_solutions(mindist2, [[-2.0, 0.0], [2.0, 0.0]])
        for s in (a, b):
            s.origin = ORIGIN_ELITE
            s.subarchive_id = 0
        counter = EvaluationCounter()
        clusters = multi_objective_clustering(
            [a, b], Evaluator(mindist2, counter), mindist2.domain_width,
            policy=elite_shortcut_policy,
        )
        assert len(clusters) == 1
        assert counter.used == 0

    def test_different_subarchives_are_tested(self, mindist2):
        a, b = make_solutions(mindist2, [[-2.0, 0.0], [2.0, 0.0]])
        for i, s in enumerate((a, b)):
            s.origin = ORIGIN_ELITE
            s.subarchive_id = i
        counter = EvaluationCounter()
        clusters = multi_objective_clustering(
            [a, b], Evaluator(mindist2, counter), mindist2.domain_width,
            policy=elite_shortcut_policy,
        )
        assert len(clusters) == 2
        assert counter.used > 0

    def test_cluster_requires_members(self):
        with pytest.raises(ValueError):
            Cluster(id=0, members=[])
