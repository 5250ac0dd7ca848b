"""Hill-valley test and nearest-better clustering for multi-objective niching.

Two solutions are presumed to share a niche for one objective when no
point probed on the segment between them is worse than both endpoints.
A population is clustered per objective by walking it in fitness order
and testing each solution against its nearest better neighbors; the
multi-objective clustering is the intersection of the per-objective
clusterings, so two solutions share a final cluster only if they share a
niche in every objective.

Probe evaluations are billable and cached per solution pair so that the
clustering of later objectives reuses them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .core import ORIGIN_ELITE, ORIGIN_HV_TEST, Solution, stack_f, stack_x

EvaluateFn = Callable[[np.ndarray], np.ndarray]

# nearest-better distances are computed in row slabs of this size, keeping
# peak memory modest even for populations of ~10^5
_BLOCK_ROWS = 512


@dataclass
class Cluster:
    """A set of solutions presumed to occupy one multi-objective niche."""

    id: int
    members: list[Solution]
    mean: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("cluster must be non-empty")
        if self.mean is None:
            self.refresh_mean()

    def refresh_mean(self) -> None:
        self.mean = stack_x(self.members).mean(axis=0)

    def __len__(self) -> int:
        return len(self.members)


@dataclass
class ClusteringStats:
    """Bookkeeping for one clustering pass (budget analysis and debugging)."""

    points_evaluated: int = 0
    tests_performed: int = 0
    test_points_requested: int = 0
    cache_hits: int = 0
    shortcut_accepts: int = 0
    clusters_per_objective: list[int] = field(default_factory=list)

    @property
    def mean_test_points(self) -> float:
        if self.tests_performed == 0:
            return 0.0
        return self.test_points_requested / self.tests_performed


class _PairEntry:
    __slots__ = ("a", "b", "n_test", "points", "verdicts")

    def __init__(self, a: Solution, b: Solution, n_test: int) -> None:
        self.a = a
        self.b = b
        self.n_test = n_test
        self.points: list[Solution] = []
        self.verdicts: dict[int, bool] = {}


class HVTestCache:
    """Hill-valley probe cache keyed by unordered solution pair.

    Probe points are shared across objectives (lazily extended, since an
    early rejection for one objective may not have materialized the full
    probe sequence).  Entries are keyed on the pair plus the probe count,
    so re-testing with a different resolution is a fresh test.
    """

    def __init__(self) -> None:
        self._entries: dict[tuple[int, int, int], _PairEntry] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> Sequence[_PairEntry]:
        return list(self._entries.values())

    def _key(self, a: Solution, b: Solution, n_test: int) -> tuple[int, int, int]:
        ia, ib = id(a), id(b)
        return (ia, ib, n_test) if ia <= ib else (ib, ia, n_test)

    def test(
        self,
        a: Solution,
        b: Solution,
        n_test: int,
        objective: int,
        evaluate: EvaluateFn,
        stats: ClusteringStats | None = None,
    ) -> bool:
        """Cached hill-valley test of ``a`` vs ``b`` on one objective."""
        key = self._key(a, b, n_test)
        entry = self._entries.get(key)
        if entry is None:
            entry = _PairEntry(a, b, n_test)
            self._entries[key] = entry
        elif objective in entry.verdicts:
            if stats is not None:
                stats.cache_hits += 1
            return entry.verdicts[objective]

        if stats is not None:
            stats.tests_performed += 1
            stats.test_points_requested += n_test
        threshold = max(a.f[objective], b.f[objective])
        # probe points ordered from entry.a toward entry.b
        xa, xb = entry.a.x, entry.b.x
        verdict = True
        for k in range(1, n_test + 1):
            if k - 1 < len(entry.points):
                probe = entry.points[k - 1]
            else:
                xk = xa + (k / (n_test + 1)) * (xb - xa)
                fk = evaluate(xk[None, :])[0]
                probe = Solution(xk, fk, origin=ORIGIN_HV_TEST)
                entry.points.append(probe)
                if stats is not None:
                    stats.points_evaluated += 1
            if probe.f[objective] > threshold:
                verdict = False
                break
        entry.verdicts[objective] = verdict
        return verdict


def hill_valley_test(
    a: Solution,
    b: Solution,
    n_test: int,
    objective: int,
    evaluate: EvaluateFn,
) -> tuple[bool, list[Solution]]:
    """Probe the segment between ``a`` and ``b`` on one objective.

    Evaluates interior points ``x + k/(n_test+1) * (y - x)`` for
    ``k = 1..n_test`` (full objective vector, one billable evaluation
    each) and rejects at the first point strictly worse than both
    endpoints.  Identical endpoints are trivially in the same niche.

    Returns the verdict and the probe solutions evaluated before the
    verdict was reached.
    """
    if n_test < 1:
        raise ValueError(f"n_test must be >= 1, got {n_test}")
    if np.array_equal(a.x, b.x):
        return True, []
    threshold = max(a.f[objective], b.f[objective])
    points: list[Solution] = []
    for k in range(1, n_test + 1):
        xk = a.x + (k / (n_test + 1)) * (b.x - a.x)
        fk = evaluate(xk[None, :])[0]
        points.append(Solution(xk, fk, origin=ORIGIN_HV_TEST))
        if fk[objective] > threshold:
            return False, points
    return True, points


def edge_length(X: np.ndarray, domain_width: np.ndarray | float) -> float:
    """Expected nearest-neighbor scale of a population.

    Computed as ``(V/|P|)^(1/n)`` where ``V`` is the volume of the
    population's bounding box.  Coordinates with zero extent (population
    collapsed in that direction) contribute ``1e-12 * domain_width``
    instead, keeping the result finite after convergence.
    """
    X = np.asarray(X, dtype=float)
    if len(X) < 2:
        raise ValueError("edge length needs at least two points")
    n = X.shape[1]
    extents = X.max(axis=0) - X.min(axis=0)
    widths = np.broadcast_to(np.asarray(domain_width, dtype=float), (n,))
    floor = 1e-12 * widths
    extents = np.where(extents > 0, extents, floor)
    # geometric mean form avoids overflow for large n
    log_volume = np.log(extents).sum()
    return float(np.exp((log_volume - math.log(len(X))) / n))


def test_point_count(pair_distance: float, edge: float) -> int:
    """Number of hill-valley probe points: ``1 + floor(distance/edge)``."""
    return 1 + int(math.floor(pair_distance / edge))


# niche policy verdicts for a candidate pair prior to testing
PAIR_TEST = "test"
PAIR_SAME = "same"


def always_test_policy(a: Solution, b: Solution) -> str:
    """Default policy: every candidate pair is hill-valley tested."""
    return PAIR_TEST


def elite_shortcut_policy(a: Solution, b: Solution) -> str:
    """Elites of the same subarchive share a niche without testing.

    Elites from different subarchives (and any pair involving a non-elite)
    are always tested, so wrongly split niches can re-merge over time.
    """
    if (
        a.origin == ORIGIN_ELITE
        and b.origin == ORIGIN_ELITE
        and a.subarchive_id >= 0
        and a.subarchive_id == b.subarchive_id
    ):
        return PAIR_SAME
    return PAIR_TEST


def _prefix_neighbors(
    X_sorted: np.ndarray, n_neighbors: int
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest better neighbors for every solution, in slabs.

    For each row ``i`` of the fitness-sorted decision matrix, finds the up
    to ``min(i, n_neighbors)`` nearest rows among ``0..i-1``, ordered by
    distance with ties broken by sorted rank.  Returns index and distance
    matrices padded with -1 / inf.
    """
    n = len(X_sorted)
    k_max = min(n_neighbors, n - 1)
    idx_out = np.full((n, k_max), -1, dtype=np.int64)
    dist_out = np.full((n, k_max), np.inf)
    # rows with fewer candidates than neighbors: take the whole prefix
    head = min(n, k_max + 1)
    for i in range(1, head):
        d = np.linalg.norm(X_sorted[:i] - X_sorted[i], axis=1)
        order = np.lexsort((np.arange(i), d))
        idx_out[i, :i] = order
        dist_out[i, :i] = d[order]
    # remaining rows in slabs: one masked partition per slab
    for a in range(head, n, _BLOCK_ROWS):
        b = min(a + _BLOCK_ROWS, n)
        D = cdist(X_sorted[a:b], X_sorted[:b])
        cols = np.arange(b)[None, :]
        D[cols >= np.arange(a, b)[:, None]] = np.inf
        part = np.argpartition(D, k_max - 1, axis=1)[:, :k_max]
        part.sort(axis=1)  # index order first, so distance ties stay deterministic
        pd = np.take_along_axis(D, part, axis=1)
        perm = np.argsort(pd, axis=1, kind="stable")
        idx_out[a:b] = np.take_along_axis(part, perm, axis=1)
        dist_out[a:b] = np.take_along_axis(pd, perm, axis=1)
    return idx_out, dist_out


def _cluster_one_objective(
    population: Sequence[Solution],
    F: np.ndarray,
    X: np.ndarray,
    objective: int,
    edge: float,
    n_neighbors: int,
    cache: HVTestCache,
    policy: Callable[[Solution, Solution], str],
    evaluate: EvaluateFn,
    stats: ClusteringStats,
) -> np.ndarray:
    """Single-objective nearest-better clustering; returns a label per solution."""
    n_pop = len(population)
    order = np.argsort(F[:, objective], kind="stable")
    labels_sorted = np.empty(n_pop, dtype=np.int64)
    labels_sorted[0] = 0
    n_clusters = 1
    neighbor_idx, neighbor_dist = _prefix_neighbors(X[order], n_neighbors)

    for i in range(1, n_pop):
        sol = population[order[i]]
        assigned = -1
        for j, dist in zip(neighbor_idx[i], neighbor_dist[i]):
            if j < 0:
                break
            better = population[order[j]]
            if policy(sol, better) == PAIR_SAME:
                stats.shortcut_accepts += 1
                assigned = labels_sorted[j]
                break
            if dist == 0.0:
                # identical decision vectors trivially share the niche
                assigned = labels_sorted[j]
                break
            same = cache.test(
                sol, better, test_point_count(dist, edge), objective, evaluate, stats
            )
            if same:
                assigned = labels_sorted[j]
                break
        if assigned < 0:
            assigned = n_clusters
            n_clusters += 1
        labels_sorted[i] = assigned

    labels = np.empty(n_pop, dtype=np.int64)
    labels[order] = labels_sorted
    stats.clusters_per_objective.append(n_clusters)
    return labels


def single_objective_clustering(
    population: Sequence[Solution],
    objective: int,
    evaluate: EvaluateFn,
    domain_width: np.ndarray | float,
    *,
    cache: HVTestCache | None = None,
    policy: Callable[[Solution, Solution], str] = always_test_policy,
    n_neighbors: int | None = None,
    stats: ClusteringStats | None = None,
) -> list[Cluster]:
    """Cluster a population into the niches of one objective.

    The population is walked best-first; each solution joins the cluster
    of the first of its (up to ``n+1``) nearest better neighbors that
    passes the hill-valley test, otherwise it seeds a new cluster.
    """
    pop = list(population)
    if not pop:
        return []
    stats = stats if stats is not None else ClusteringStats()
    if len(pop) == 1:
        return [Cluster(id=0, members=pop)]
    X = stack_x(pop)
    F = stack_f(pop)
    cache = cache if cache is not None else HVTestCache()
    if n_neighbors is None:
        n_neighbors = X.shape[1] + 1
    edge = edge_length(X, domain_width)
    labels = _cluster_one_objective(
        pop, F, X, objective, edge, n_neighbors, cache, policy, evaluate, stats
    )
    return _clusters_from_labels(pop, labels)


def multi_objective_clustering(
    population: Sequence[Solution],
    evaluate: EvaluateFn,
    domain_width: np.ndarray | float,
    *,
    cache: HVTestCache | None = None,
    policy: Callable[[Solution, Solution], str] = always_test_policy,
    n_neighbors: int | None = None,
    stats: ClusteringStats | None = None,
) -> list[Cluster]:
    """Cluster a population into multi-objective niches.

    Runs the single-objective clustering once per objective and intersects
    the results: two solutions share a final cluster iff they share a
    cluster for every objective.  Probe points evaluated along the way are
    recycled into the final cluster of their endpoint pair when both
    endpoints agree; the rest are discarded.
    """
    pop = list(population)
    if not pop:
        return []
    stats = stats if stats is not None else ClusteringStats()
    if len(pop) == 1:
        return [Cluster(id=0, members=pop)]
    X = stack_x(pop)
    F = stack_f(pop)
    cache = cache if cache is not None else HVTestCache()
    if n_neighbors is None:
        n_neighbors = X.shape[1] + 1
    edge = edge_length(X, domain_width)

    m = F.shape[1]
    label_matrix = np.empty((len(pop), m), dtype=np.int64)
    for objective in range(m):
        label_matrix[:, objective] = _cluster_one_objective(
            pop, F, X, objective, edge, n_neighbors, cache, policy, evaluate, stats
        )

    # intersect the per-objective clusterings
    _, final_labels = np.unique(label_matrix, axis=0, return_inverse=True)
    final_labels = np.asarray(final_labels).reshape(-1)
    clusters = _clusters_from_labels(pop, final_labels)

    # recycle probe points whose endpoints landed in the same final cluster
    index_of = {id(s): i for i, s in enumerate(pop)}
    by_label = {c.id: c for c in clusters}
    label_of = np.asarray(final_labels)
    for entry in cache.entries():
        if not entry.points:
            continue
        ia = index_of.get(id(entry.a))
        ib = index_of.get(id(entry.b))
        if ia is None or ib is None:
            continue
        if label_of[ia] == label_of[ib]:
            by_label[int(label_of[ia])].members.extend(entry.points)
    for cluster in clusters:
        cluster.refresh_mean()
    return clusters


def _clusters_from_labels(
    population: Sequence[Solution], labels: np.ndarray
) -> list[Cluster]:
    """Group solutions by label; cluster ids follow first appearance order."""
    seen: dict[int, int] = {}
    groups: list[list[Solution]] = []
    for sol, raw in zip(population, labels):
        raw = int(raw)
        if raw not in seen:
            seen[raw] = len(groups)
            groups.append([])
        groups[seen[raw]].append(sol)
    # re-map labels in place so callers can rely on 0..k-1 appearance order
    for i in range(len(labels)):
        labels[i] = seen[int(labels[i])]
    return [Cluster(id=i, members=members) for i, members in enumerate(groups)]
