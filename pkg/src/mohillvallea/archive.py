"""Niche-local elitist archives and approximation-set post-processing.

Each niche (cluster) owns a subarchive in which Pareto dominance is
enforced only among its own members, so a solution dominated by another
niche survives.  When the combined archive outgrows its target size, all
subarchives are thinned on a shared adaptive grid in normalized objective
space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .core import Solution, nondominated_mask, stack_f, stack_x

if TYPE_CHECKING:  # pragma: no cover
    from .hillvalley import Cluster


@dataclass
class Subarchive:
    """Non-dominated store for a single niche.

    Dominance is checked only among this subarchive's own members.
    """

    id: int
    elites: list[Solution] = field(default_factory=list)
    cluster_id: int = -1

    def __len__(self) -> int:
        return len(self.elites)

    def objective_matrix(self) -> np.ndarray:
        return stack_f(self.elites)

    def insert(self, solution: Solution) -> bool:
        """Insert unless dominated by a member; drops members it dominates.

        Returns True when the archive changed.
        """
        if not self.elites:
            self.elites.append(solution)
            return True
        F = self.objective_matrix()
        f = solution.f
        dominated_by_member = np.any(
            np.all(F <= f, axis=1) & np.any(F < f, axis=1)
        )
        if dominated_by_member:
            return False
        dominates_member = np.all(f <= F, axis=1) & np.any(f < F, axis=1)
        if dominates_member.any():
            self.elites = [
                e for e, drop in zip(self.elites, dominates_member) if not drop
            ]
        self.elites.append(solution)
        return True


@dataclass
class ElitistArchive:
    """All subarchives plus the shared discretization state."""

    subarchives: list[Subarchive] = field(default_factory=list)
    target_size: int = 1000
    grid_resolution: float | None = None

    def all_elites(self) -> list[Solution]:
        return [e for sa in self.subarchives for e in sa.elites]

    def total_size(self) -> int:
        return sum(len(sa) for sa in self.subarchives)

    def __len__(self) -> int:
        return self.total_size()


def construct_local_archives(
    clusters: Sequence["Cluster"], target_size: int
) -> ElitistArchive:
    """One subarchive per cluster, holding the cluster's non-dominated members.

    Cross-cluster dominance is deliberately ignored; afterwards the archive
    is discretized if it exceeds ``target_size``.
    """
    archive = ElitistArchive(target_size=target_size)
    for idx, cluster in enumerate(clusters):
        members = list(cluster.members)
        if not members:
            continue
        mask = nondominated_mask(stack_f(members))
        elites = [s for s, keep in zip(members, mask) if keep]
        archive.subarchives.append(
            Subarchive(id=idx, elites=elites, cluster_id=cluster.id)
        )
    return discretize_if_needed(archive)


def discretize_if_needed(archive: ElitistArchive) -> ElitistArchive:
    """Thin the archive to its target size on a shared objective-space grid.

    The grid cell size (in per-objective normalized coordinates) starts at
    ``1/target`` and doubles until keeping one representative per occupied
    cell per subarchive fits the target; one bisection step then refines
    the result.  Each non-empty subarchive keeps at least one elite.
    """
    total = archive.total_size()
    if total <= archive.target_size or total == 0:
        return archive

    F_all = stack_f(archive.all_elites())
    f_min = F_all.min(axis=0)
    f_range = np.maximum(F_all.max(axis=0) - f_min, 1e-300)
    normalized = [
        (sa.objective_matrix() - f_min) / f_range for sa in archive.subarchives
    ]

    def kept_count(cell: float) -> int:
        return sum(_occupied_cells(fn, cell) for fn in normalized)

    cell = 1.0 / archive.target_size
    # a cell size of 2 covers the whole normalized range; one elite survives
    # per subarchive, which is the floor of what discretization can reach
    while kept_count(cell) > archive.target_size and cell < 2.0:
        cell *= 2.0
    mid = 0.75 * cell
    if kept_count(mid) <= archive.target_size:
        cell = mid

    for sa, fn in zip(archive.subarchives, normalized):
        keep = _cell_representatives(fn, cell)
        sa.elites = [sa.elites[i] for i in keep]
    archive.grid_resolution = cell
    return archive


def _cell_keys(fn: np.ndarray, cell: float) -> np.ndarray:
    idx = np.floor(fn / cell).astype(np.int64)
    base = int(idx.max()) + 2 if len(idx) else 1
    keys = np.zeros(len(fn), dtype=np.int64)
    for d in range(fn.shape[1]):
        keys = keys * base + idx[:, d]
    return keys


def _occupied_cells(fn: np.ndarray, cell: float) -> int:
    return len(np.unique(_cell_keys(fn, cell)))


def _cell_representatives(fn: np.ndarray, cell: float) -> np.ndarray:
    """Per occupied cell, the member with the lowest normalized-objective sum.

    Ties break toward the lowest index; output preserves index order.
    """
    keys = _cell_keys(fn, cell)
    score = fn.sum(axis=1)
    order = np.lexsort((np.arange(len(fn)), score, keys))
    _, first = np.unique(keys[order], return_index=True)
    return np.sort(order[first])


def greedy_scattered_indices(points: np.ndarray, target: int) -> np.ndarray:
    """Greedy max-min subset selection over the rows of ``points``.

    Starts from the point farthest from the centroid, then repeatedly adds
    the point with maximal distance to the selected set.  Fully
    deterministic: distance ties resolve to the lowest index.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if target >= n:
        return np.arange(n)
    if target < 1:
        raise ValueError(f"target must be >= 1, got {target}")
    center = points.mean(axis=0)
    dist_to_set = np.linalg.norm(points - center, axis=1)
    selected = np.empty(target, dtype=np.int64)
    chosen = int(np.argmax(dist_to_set))  # argmax takes the first maximum
    selected[0] = chosen
    dist_to_set = np.linalg.norm(points - points[chosen], axis=1)
    for i in range(1, target):
        chosen = int(np.argmax(dist_to_set))
        selected[i] = chosen
        np.minimum(
            dist_to_set,
            np.linalg.norm(points - points[chosen], axis=1),
            out=dist_to_set,
        )
    return selected


def greedy_scattered_subset_selection(
    solutions: Sequence[Solution], target: int, space: str = "decision"
) -> list[Solution]:
    """Spread-preserving subset of ``solutions`` with exactly
    ``min(target, len(solutions))`` members.

    ``space`` selects the distance space: ``"decision"`` or ``"objective"``.
    """
    pool = list(solutions)
    if target >= len(pool):
        return pool
    if space == "decision":
        points = stack_x(pool)
    elif space == "objective":
        points = stack_f(pool)
    else:
        raise ValueError(f"unknown space {space!r}")
    idx = greedy_scattered_indices(points, target)
    return [pool[i] for i in idx]


def postprocess_approximation_set(
    archive: ElitistArchive, n_max: int
) -> list[Solution]:
    """Approximation set: subarchives that touch the global non-dominated set.

    Keeps the union of all subarchives containing at least one solution
    that is non-dominated within the union of all elites; reduces to
    ``n_max`` solutions by greedy scattered subset selection in decision
    space when necessary.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    elites = archive.all_elites()
    if not elites:
        return []
    mask = nondominated_mask(stack_f(elites))
    union: list[Solution] = []
    offset = 0
    for sa in archive.subarchives:
        size = len(sa)
        if mask[offset : offset + size].any():
            union.extend(sa.elites)
        offset += size
    return greedy_scattered_subset_selection(union, n_max, space="decision")


def export_archive_rows(archive: ElitistArchive) -> Iterable[tuple]:
    """Rows ``(subarchive_id, *x, *f)`` for CSV export."""
    for sa in archive.subarchives:
        for sol in sa.elites:
            yield (sa.id, *sol.x.tolist(), *sol.f.tolist())
