import numpy as np
import pytest

import oracles
from mohillvallea.core import EvaluationCounter, Solution, make_rng, stack_f, stack_x
from mohillvallea.gaussian_core import (
    KIND_OBJECTIVE,
    KIND_RANK,
    ClusterModelState,
    CoreConfig,
    SubsetModel,
    adapt_multiplier,
    core_opt_generation,
    estimate_model,
    form_subsets,
    rank_and_select,
    register_subsets,
    sample_offspring,
)
from mohillvallea.problems import Evaluator, get_problem, sample_uniform

WIDTH = np.array([8.0, 8.0])


def sols(F, X=None):
    F = np.atleast_2d(np.asarray(F, float))
    if X is None:
        X = np.zeros((len(F), 2))
    return [Solution(x, f) for x, f in zip(np.atleast_2d(X), F)]


def make_model(mean, cov, **kw):
    mean = np.asarray(mean, float)
    cov = np.asarray(cov, float)
    return SubsetModel(
        kind=KIND_RANK, objective=-1, mean=mean, covariance=cov,
        objective_mean=np.zeros(2), **kw,
    )


class TestRankAndSelect:
    def test_all_nondominating_full_tau(self):
        members = sols([[0, 3], [1, 2], [2, 1], [3, 0]])
        assert sorted(rank_and_select(members, 1.0, make_rng(0))) == [0, 1, 2, 3]

    def test_chain_takes_top(self):
        members = sols([[i, i] for i in range(10)])
        assert sorted(rank_and_select(members, 0.3, make_rng(0))) == [0, 1, 2]

    def test_fronts_match_bruteforce_peeling(self):
        rng = make_rng(2)
        F = rng.uniform(0, 1, size=(50, 2))
        members = sols(F)
        expected_fronts = oracles.front_peel(F)
        # selecting exactly the first k fronts' worth must return those fronts
        count = len(expected_fronts[0]) + len(expected_fronts[1])
        tau = count / len(members)
        chosen = set(rank_and_select(members, tau, make_rng(0)))
        assert chosen == expected_fronts[0] | expected_fronts[1]

    def test_tiny_cluster_returns_best(self):
        members = sols([[1, 1], [0, 0]])
        assert rank_and_select(members, 0.2, make_rng(0)) == [1]

    def test_invalid_tau(self):
        with pytest.raises(ValueError):
            rank_and_select(sols([[0, 0]]), 0.0, make_rng(0))


class TestFormSubsets:
    def test_single_subset_is_the_selection(self):
        rng = make_rng(3)
        F = rng.uniform(0, 1, size=(40, 2))
        members = sols(F, rng.uniform(-1, 1, size=(40, 2)))
        selection = set(rank_and_select(members, 0.35, make_rng(7)))
        subsets = form_subsets(members, 1, 2 * len(selection), 0.35, make_rng(7))
        assert len(subsets) == 1
        kind, objective, idx = subsets[0]
        assert kind == KIND_RANK
        assert set(idx) == selection

    def test_counts_match_sizing_rule(self):
        # 100 members, tau=0.35, k=5 -> two single-objective subsets of 14
        # plus three leader subsets
        rng = make_rng(4)
        F = rng.uniform(0, 1, size=(100, 2))
        members = sols(F, rng.uniform(-1, 1, size=(100, 2)))
        config = CoreConfig(tau=0.35)
        n_c = config.subset_size(100, 5)
        assert n_c == 14
        subsets = form_subsets(members, 5, n_c, 0.35, make_rng(0))
        assert len(subsets) == 5
        kinds = [kind for kind, _, _ in subsets]
        assert kinds.count(KIND_OBJECTIVE) == 2
        assert kinds.count(KIND_RANK) == 3
        for kind, objective, idx in subsets:
            if kind == KIND_OBJECTIVE:
                assert len(idx) == 14
                best = np.argsort(F[:, objective], kind="stable")[:14]
                assert set(idx) == set(int(i) for i in best)

    def test_k_equal_m_has_no_single_objective_subsets(self):
        rng = make_rng(5)
        members = sols(rng.uniform(0, 1, size=(30, 2)))
        subsets = form_subsets(members, 2, 10, 0.35, make_rng(0))
        assert all(kind == KIND_RANK for kind, _, _ in subsets)

    def test_subsets_may_overlap(self):
        rng = make_rng(6)
        members = sols(rng.uniform(0, 1, size=(20, 2)))
        subsets = form_subsets(members, 4, 12, 0.5, make_rng(0))
        all_idx = [i for _, _, idx in subsets for i in idx]
        assert len(all_idx) > len(set(all_idx))


class TestEstimateModel:
    def cfg(self, variant="mam"):
        return CoreConfig(variant=variant)

    def test_two_point_hand_computation(self):
        subset = sols([[0, 0], [0, 0]], X=[[0.0, 0.0], [2.0, 0.0]])
        model = estimate_model(subset, KIND_RANK, -1, self.cfg(), None, WIDTH)
        assert model.mean == pytest.approx([1.0, 0.0])
        assert model.covariance[0, 0] == pytest.approx(1.0)
        assert model.covariance[0, 1] == 0.0

    def test_degenerate_subset_regularized(self):
        subset = sols([[0, 0]] * 3, X=[[1.0, 1.0]] * 3)
        model = estimate_model(subset, KIND_RANK, -1, self.cfg(), None, WIDTH)
        # collapsed covariance re-inflated from the domain width
        assert np.all(np.diag(model.covariance) > 0)

    def test_univariate_is_diagonal_vector(self):
        rng = make_rng(8)
        subset = sols(rng.uniform(0, 1, (10, 2)), X=rng.uniform(-1, 1, (10, 2)))
        model = estimate_model(subset, KIND_RANK, -1, self.cfg("mamu"), None, WIDTH)
        assert model.covariance.ndim == 1
        assert model.univariate

    def test_incremental_fixed_point(self):
        rng = make_rng(9)
        X = rng.uniform(-1, 1, (12, 2))
        subset = sols(np.zeros((12, 2)), X=X)
        cfg = self.cfg("imam")
        first = estimate_model(subset, KIND_RANK, -1, cfg, None, WIDTH)
        second = estimate_model(subset, KIND_RANK, -1, cfg, first, WIDTH)
        assert second.mean == pytest.approx(first.mean)
        assert second.covariance == pytest.approx(first.covariance)

    def test_incremental_blend_rates(self):
        subset_a = sols(np.zeros((4, 2)), X=np.zeros((4, 2)))
        subset_b = sols(np.zeros((4, 2)), X=np.full((4, 2), 1.0))
        cfg = self.cfg("imam")
        prev = estimate_model(subset_a, KIND_RANK, -1, cfg, None, WIDTH)
        nxt = estimate_model(subset_b, KIND_RANK, -1, cfg, prev, WIDTH)
        # mean moves 80% of the way toward the new estimate
        assert nxt.mean == pytest.approx([0.8, 0.8])

    def test_multiplier_carried_from_previous(self):
        rng = make_rng(10)
        subset = sols(np.zeros((6, 2)), X=rng.uniform(-1, 1, (6, 2)))
        prev = estimate_model(subset, KIND_RANK, -1, self.cfg(), None, WIDTH)
        prev.multiplier = 0.25
        nxt = estimate_model(subset, KIND_RANK, -1, self.cfg(), prev, WIDTH)
        assert nxt.multiplier == 0.25
        assert nxt.displacement == pytest.approx([0.0, 0.0])

    def test_covariance_symmetric_psd(self):
        rng = make_rng(11)
        for _ in range(20):
            subset = sols(np.zeros((8, 2)), X=rng.uniform(-3, 3, (8, 2)))
            model = estimate_model(subset, KIND_RANK, -1, self.cfg(), None, WIDTH)
            C = model.covariance
            assert np.allclose(C, C.T)
            assert np.linalg.eigvalsh(C).min() >= -1e-10


class _EvalStub:
    def __init__(self, fn):
        self.fn = fn
        self.remaining = None
        self.calls = 0

    def __call__(self, X):
        self.calls += len(np.atleast_2d(X))
        return self.fn(np.atleast_2d(X))


def _identity_repair(X):
    return X


class TestSampleOffspring:
    def test_small_multiplier_concentrates_on_mean(self):
        model = make_model([1.0, -1.0], np.eye(2), multiplier=1e-8)
        evaluate = _EvalStub(lambda X: X.copy())
        out = sample_offspring(model, 50, _identity_repair, evaluate, make_rng(0), CoreConfig())
        X = stack_x(out)
        assert np.max(np.abs(X - model.mean)) < 1e-6

    def test_identity_covariance_statistics(self):
        model = make_model([0.0, 0.0], np.eye(2))
        evaluate = _EvalStub(lambda X: X.copy())
        out = sample_offspring(
            model, 10_000, _identity_repair, evaluate, make_rng(1), CoreConfig(ams_fraction=0.0)
        )
        C = np.cov(stack_x(out).T, bias=True)
        assert np.allclose(C, np.eye(2), atol=0.1)  # each entry within 10%

    def test_boundary_repair_applied(self):
        model = make_model([3.9, 3.9], np.eye(2))
        problem = get_problem("mindist2")
        evaluate = _EvalStub(problem.evaluate_batch)
        out = sample_offspring(
            model, 200, problem.repair_to_bounds, evaluate, make_rng(2), CoreConfig()
        )
        X = stack_x(out)
        assert X.max() <= 4.0 and X.min() >= -4.0
        assert np.any(X == 4.0)  # clamped samples sit on the boundary

    def test_anticipated_mean_shift_moves_prefix(self):
        model = make_model([0.0, 0.0], 1e-20 * np.eye(2), displacement=np.array([1.0, 0.0]))
        evaluate = _EvalStub(lambda X: X.copy())
        cfg = CoreConfig(ams_fraction=0.2, ams_factor=2.0)
        out = sample_offspring(model, 10, _identity_repair, evaluate, make_rng(3), cfg)
        X = stack_x(out)
        assert np.allclose(X[:2, 0], 2.0, atol=1e-8)
        assert np.allclose(X[2:, 0], 0.0, atol=1e-8)

    def test_exact_count(self):
        model = make_model([0.0, 0.0], np.eye(2))
        evaluate = _EvalStub(lambda X: X.copy())
        out = sample_offspring(model, 7, _identity_repair, evaluate, make_rng(4), CoreConfig())
        assert len(out) == 7 and evaluate.calls == 7


class TestAdaptMultiplier:
    def test_no_improvement_decays(self):
        model = make_model([0.0, 0.0], np.eye(2))
        offspring = sols([[2, 2], [3, 3]])
        elites = sols([[0, 0]])
        adapt_multiplier(model, offspring, elites, CoreConfig())
        assert model.multiplier == pytest.approx(0.9)

    def test_lower_bound_respected(self):
        model = make_model([0.0, 0.0], np.eye(2), multiplier=1e-6)
        offspring = sols([[2, 2]])
        elites = sols([[0, 0]])
        adapt_multiplier(model, offspring, elites, CoreConfig())
        assert model.multiplier >= 1e-6

    def test_far_improvements_grow(self):
        model = make_model([0.0, 0.0], 0.01 * np.eye(2))
        # offspring dominates the elite and sits far outside one std radius
        offspring = sols([[-1, -1]], X=[[5.0, 5.0]])
        elites = sols([[0, 0]], X=[[0.0, 0.0]])
        adapt_multiplier(model, offspring, elites, CoreConfig())
        assert model.multiplier == pytest.approx(1 / 0.9)

    def test_stationary_landscape_stays_bounded(self):
        # constant objective: nothing ever dominates, multiplier must not blow up
        model = make_model([0.0, 0.0], np.eye(2))
        cfg = CoreConfig()
        rng = make_rng(5)
        evaluate = _EvalStub(lambda X: np.ones((len(X), 2)))
        elites = sols([[1, 1]])
        for _ in range(100):
            off = sample_offspring(model, 10, _identity_repair, evaluate, rng, cfg)
            adapt_multiplier(model, off, elites, cfg)
            assert 1e-6 <= model.multiplier <= 1e3
        assert model.multiplier <= 1.0


class TestRegisterSubsets:
    def descriptors(self, means, kinds=None):
        kinds = kinds or [KIND_RANK] * len(means)
        return [
            (kind, (0 if kind == KIND_OBJECTIVE else -1), np.asarray(m, float))
            for kind, m in zip(kinds, means)
        ]

    def models(self, means, kinds=None, objectives=None):
        kinds = kinds or [KIND_RANK] * len(means)
        objectives = objectives or [-1] * len(means)
        return [
            SubsetModel(
                kind=k, objective=o, mean=np.zeros(2), covariance=np.eye(2),
                objective_mean=np.asarray(m, float),
            )
            for k, o, m in zip(kinds, objectives, means)
        ]

    def test_identity_mapping(self):
        prev = self.models([[0, 0], [5, 5]])
        mapping = register_subsets(self.descriptors([[0, 0], [5, 5]]), prev)
        assert mapping == [prev[0], prev[1]]

    def test_empty_previous(self):
        assert register_subsets(self.descriptors([[0, 0]]), []) == [None]

    def test_pigeonhole_reuse(self):
        prev = self.models([[0, 0], [10, 10]])
        mapping = register_subsets(
            self.descriptors([[0, 0], [1, 1], [10, 10]]), prev
        )
        assert None not in mapping
        assert len({id(m) for m in mapping}) == 2  # one model reused twice

    def test_same_objective_pairing_wins_over_distance(self):
        prev = self.models(
            [[9, 9], [0, 0]], kinds=[KIND_OBJECTIVE, KIND_RANK], objectives=[0, -1]
        )
        current = [(KIND_OBJECTIVE, 0, np.array([0.0, 0.0]))]
        assert register_subsets(current, prev) == [prev[0]]


class TestCoreOptGeneration:
    def test_empty_archive_pure_sampling(self, mindist2):
        rng = make_rng(6)
        members = sample_uniform(mindist2, 30, rng)
        evaluate = Evaluator(mindist2, EvaluationCounter())
        offspring, state = core_opt_generation(
            members, [], ClusterModelState(), 12, 3, CoreConfig(),
            evaluate, mindist2.repair_to_bounds, mindist2.domain_width, rng,
        )
        assert len(offspring) == 12
        assert state.generation_index == 1

    def test_single_offspring_budget(self, mindist2):
        rng = make_rng(7)
        members = sample_uniform(mindist2, 10, rng)
        counter = EvaluationCounter()
        offspring, _ = core_opt_generation(
            members, [], ClusterModelState(), 1, 1, CoreConfig(),
            Evaluator(mindist2, counter), mindist2.repair_to_bounds,
            mindist2.domain_width, rng,
        )
        assert len(offspring) == 1 and counter.used == 1

    def test_offspring_count_exact_over_generations(self, mindist2):
        rng = make_rng(8)
        members = sample_uniform(mindist2, 40, rng)
        counter = EvaluationCounter()
        evaluate = Evaluator(mindist2, counter)
        state = ClusterModelState()
        for _ in range(5):
            offspring, state = core_opt_generation(
                members, [], state, 17, 4, CoreConfig(), evaluate,
                mindist2.repair_to_bounds, mindist2.domain_width, rng,
            )
            assert len(offspring) == 17
            members = offspring
        assert counter.used == 5 * 17

    def test_bit_reproducible(self, mindist2):
        outs = []
        for _ in range(2):
            rng = make_rng(99)
            members = sample_uniform(mindist2, 25, rng)
            offspring, _ = core_opt_generation(
                members, [], ClusterModelState(), 10, 2, CoreConfig(),
                Evaluator(mindist2, EvaluationCounter()),
                mindist2.repair_to_bounds, mindist2.domain_width, rng,
            )
            outs.append(stack_x(offspring))
        assert np.array_equal(outs[0], outs[1])

    def test_single_niche_convergence_to_front(self):
        # cluster restricted to the left niche: best f0+f1 approaches the
        # front identity value 2 within 1e-2 after 50 generations
        problem = get_problem("mindist2")
        rng = make_rng(12)
        X = rng.uniform([-4.0, -4.0], [0.0, 4.0], size=(50, 2))
        members = [Solution(x, f) for x, f in zip(X, problem.evaluate_batch(X))]
        evaluate = Evaluator(problem, EvaluationCounter())
        state = ClusterModelState()
        elites: list[Solution] = []
        for _ in range(50):
            offspring, state = core_opt_generation(
                members, elites, state, 50, 5, CoreConfig(),
                evaluate, problem.repair_to_bounds, problem.domain_width, rng,
            )
            pool = members + offspring
            best = sorted(pool, key=lambda s: s.f.sum())[:20]
            elites = best
            members = offspring
        best_sum = min(s.f.sum() for s in elites)
        assert best_sum - 2.0 < 1e-2

    def test_univariate_state_structure(self, mindist2):
        rng = make_rng(13)
        members = sample_uniform(mindist2, 30, rng)
        _, state = core_opt_generation(
            members, [], ClusterModelState(), 10, 3, CoreConfig(variant="mamu"),
            Evaluator(mindist2, EvaluationCounter()),
            mindist2.repair_to_bounds, mindist2.domain_width, rng,
        )
        assert all(m.covariance.ndim == 1 for m in state.subsets)
