"""Shared domain primitives: solutions, dominance, evaluation accounting, RNG.

Everything downstream (clustering, archives, the optimizer loop, metrics)
works with the types in this module.  Objectives are always minimized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

ORIGIN_FRESH = "fresh"
ORIGIN_ELITE = "elite"
ORIGIN_HV_TEST = "hv_test"


class BudgetExhausted(RuntimeError):
    """Raised when an evaluation would exceed the configured budget."""


@dataclass
class EvaluationCounter:
    """Counts objective-function evaluations against an optional budget.

    One optimizer run owns exactly one counter; concurrent runs must each
    own their own.  Every billed point evaluation increments ``used`` by 1
    (batch calls charge the batch size).
    """

    budget: int | None = None
    used: int = 0

    def __post_init__(self) -> None:
        if self.budget is not None and self.budget <= 0:
            raise ValueError(f"budget must be positive, got {self.budget}")

    @property
    def remaining(self) -> int | None:
        if self.budget is None:
            return None
        return self.budget - self.used

    def charge(self, count: int = 1) -> None:
        """Bill ``count`` evaluations; raises BudgetExhausted if over budget."""
        if count < 0:
            raise ValueError("count must be non-negative")
        if self.budget is not None and self.used + count > self.budget:
            raise BudgetExhausted(
                f"requested {count} evaluations with {self.remaining} remaining"
            )
        self.used += count


@dataclass(eq=False)
class Solution:
    """One evaluated point: decision vector ``x`` and objective vector ``f``.

    ``x`` and ``f`` are fixed at construction.  The bookkeeping tags
    (``origin``, ``subarchive_id``) describe how the solution entered the
    current population and are re-assigned by the single-threaded optimizer
    loop between generations; nothing else may mutate them.

    Identity semantics: two solutions are equal only if they are the same
    object, so populations and archives may hold coordinate duplicates.
    """

    x: np.ndarray
    f: np.ndarray
    origin: str = ORIGIN_FRESH
    subarchive_id: int = -1
    instance_id: int = -1
    birth_gen: int = -1

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        self.f = np.asarray(self.f, dtype=float)


def dominates(a: Solution, b: Solution) -> bool:
    """True iff ``a`` Pareto-dominates ``b`` (minimization).

    ``a`` dominates ``b`` when it is no worse in every objective and
    strictly better in at least one.  Equal objective vectors never
    dominate each other.
    """
    return dominates_f(a.f, b.f)


def dominates_f(fa: np.ndarray, fb: np.ndarray) -> bool:
    fa = np.asarray(fa, dtype=float)
    fb = np.asarray(fb, dtype=float)
    if fa.shape != fb.shape:
        raise ValueError(f"objective length mismatch: {fa.shape} vs {fb.shape}")
    return bool(np.all(fa <= fb) and np.any(fa < fb))


def nondominated_mask(F: np.ndarray) -> np.ndarray:
    """Boolean mask of the non-dominated rows of objective matrix ``F``.

    Equal rows are mutually non-dominating, so exact duplicates of a
    non-dominated vector are all kept.  Uses an O(N log N) sweep for two
    objectives and a pairwise block comparison otherwise.
    """
    F = np.asarray(F, dtype=float)
    if F.ndim != 2:
        raise ValueError("F must be 2-D (points x objectives)")
    n = len(F)
    if n == 0:
        return np.zeros(0, dtype=bool)
    if F.shape[1] == 2 and n > 32:
        return _nondominated_mask_2d(F)
    return _nondominated_mask_pairwise(F)


def _nondominated_mask_pairwise(F: np.ndarray) -> np.ndarray:
    n = len(F)
    mask = np.ones(n, dtype=bool)
    # chunk rows so the (chunk, n, m) comparison tensors stay small
    chunk = max(1, int(2**22 // max(1, n * F.shape[1])))
    for start in range(0, n, chunk):
        block = F[start : start + chunk]  # (c, m)
        le = np.all(F[None, :, :] <= block[:, None, :], axis=2)  # other <= block
        lt = np.any(F[None, :, :] < block[:, None, :], axis=2)
        dominated = np.any(le & lt, axis=1)
        mask[start : start + chunk] = ~dominated
    return mask


def _nondominated_mask_2d(F: np.ndarray) -> np.ndarray:
    order = np.lexsort((F[:, 1], F[:, 0]))  # f0 asc, then f1 asc
    f0 = F[order, 0]
    f1 = F[order, 1]
    keep = np.zeros(len(F), dtype=bool)
    best_f1_prev = np.inf  # min f1 among strictly smaller f0
    i = 0
    n = len(F)
    while i < n:
        j = i
        while j < n and f0[j] == f0[i]:
            j += 1
        group_min = f1[i:j].min()
        if group_min < best_f1_prev:
            sel = np.flatnonzero(f1[i:j] == group_min) + i
            keep[order[sel]] = True
            best_f1_prev = group_min
        i = j
    return keep


def nondominated_filter(population: Iterable[Solution]) -> list[Solution]:
    """Solutions of ``population`` not dominated by any other member."""
    pop = list(population)
    if not pop:
        return []
    F = np.stack([s.f for s in pop])
    mask = nondominated_mask(F)
    return [s for s, keep in zip(pop, mask) if keep]


def fast_nondominated_sort(F: np.ndarray) -> list[np.ndarray]:
    """Partition objective rows into Pareto fronts (best front first).

    Returns index arrays; every row appears in exactly one front.
    """
    F = np.asarray(F, dtype=float)
    n = len(F)
    if n == 0:
        return []
    # full pairwise domination matrix; population slices here are small
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    n_dominators = dom.sum(axis=0)
    fronts: list[np.ndarray] = []
    remaining = n_dominators.copy()
    assigned = np.zeros(n, dtype=bool)
    while not assigned.all():
        current = np.flatnonzero((remaining == 0) & ~assigned)
        fronts.append(current)
        assigned[current] = True
        remaining = remaining - dom[current].sum(axis=0)
    return fronts


def stack_x(population: Sequence[Solution]) -> np.ndarray:
    return np.stack([s.x for s in population])


def stack_f(population: Sequence[Solution]) -> np.ndarray:
    return np.stack([s.f for s in population])


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; equal seeds give bit-identical streams."""
    return np.random.Generator(np.random.PCG64(seed))
