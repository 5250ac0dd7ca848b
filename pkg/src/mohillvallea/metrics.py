"""Inverted generational distance in objective and decision space, mode ratio.

All metrics are analysis-time: they never touch an optimizer's evaluation
budget.  Lower is better for IGD/IGDX; the mode ratio is the fraction of
reference modes attained within a distance threshold and is maximized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .archive import greedy_scattered_indices
from .core import Solution, stack_f, stack_x
from .problems import ReferenceSet, default_mode_ratio_epsilon


@dataclass
class MetricReport:
    """IGD/IGDX/mode-ratio snapshot of one approximation set."""

    igd: float
    igdx: float
    mode_ratio: float
    per_mode_igdx: np.ndarray
    empty_approximation: bool = False

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.igd, self.igdx, self.mode_ratio)


def _as_matrices(A) -> tuple[np.ndarray, np.ndarray]:
    """Decision and objective matrices from a solution list or (X, F) pair."""
    if isinstance(A, tuple):
        X, F = A
        return np.atleast_2d(np.asarray(X, float)), np.atleast_2d(np.asarray(F, float))
    A = list(A)
    if not A:
        return np.zeros((0, 0)), np.zeros((0, 0))
    return stack_x(A), stack_f(A)


def _mean_min_distance(targets: np.ndarray, candidates: np.ndarray) -> float:
    """Mean over ``targets`` of the distance to the nearest candidate."""
    if len(candidates) == 0:
        return math.inf
    total = 0.0
    # chunk the reference side so the distance block stays small
    chunk = max(1, int(2**24 // max(1, len(candidates))))
    for start in range(0, len(targets), chunk):
        block = cdist(targets[start : start + chunk], candidates)
        total += block.min(axis=1).sum()
    return total / len(targets)


def igd(A: Sequence[Solution] | tuple, reference: ReferenceSet) -> float:
    """Mean objective-space distance from reference points to ``A``.

    Empty approximation sets score ``inf``.
    """
    _, F = _as_matrices(A)
    return _mean_min_distance(reference.F, F)


def igdx(A: Sequence[Solution] | tuple, reference: ReferenceSet) -> float:
    """Mean decision-space distance from reference points to ``A``."""
    X, _ = _as_matrices(A)
    return _mean_min_distance(reference.X, X)


def per_mode_igdx(A: Sequence[Solution] | tuple, reference: ReferenceSet) -> np.ndarray:
    """IGDX restricted to each reference mode."""
    X, _ = _as_matrices(A)
    values = np.empty(reference.mode_count)
    for mode in range(reference.mode_count):
        values[mode] = _mean_min_distance(reference.mode_points(mode), X)
    return values


def mode_ratio(
    A: Sequence[Solution] | tuple,
    reference: ReferenceSet,
    epsilon: float,
) -> float:
    """Fraction of reference modes with per-mode IGDX below ``epsilon``."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if reference.mode_count == 0:
        return 0.0
    values = per_mode_igdx(A, reference)
    return float(np.count_nonzero(values < epsilon)) / reference.mode_count


def compute_report(
    A: Sequence[Solution] | tuple,
    reference: ReferenceSet,
    epsilon: float | None = None,
    m: int | None = None,
) -> MetricReport:
    """All metrics for one approximation set against one reference set."""
    X, F = _as_matrices(A)
    if epsilon is None:
        epsilon = 0.05 if (m or reference.F.shape[1]) == 2 else 0.1
    empty = len(X) == 0
    per_mode = per_mode_igdx((X, F), reference)
    attained = float(np.count_nonzero(per_mode < epsilon)) / max(reference.mode_count, 1)
    return MetricReport(
        igd=_mean_min_distance(reference.F, F),
        igdx=_mean_min_distance(reference.X, X),
        mode_ratio=0.0 if empty else attained,
        per_mode_igdx=per_mode,
        empty_approximation=empty,
    )


def achievable_limits(reference: ReferenceSet, n_approx: int) -> tuple[float, float]:
    """Best IGD and IGDX reachable with an ``n_approx``-solution subset.

    The reference set is compared against its own greedy scattered subset:
    selected with objective-space distances for the IGD limit and
    decision-space distances for the IGDX limit.
    """
    if n_approx < 1:
        raise ValueError(f"n_approx must be >= 1, got {n_approx}")
    if n_approx >= len(reference):
        return (0.0, 0.0)
    obj_idx = greedy_scattered_indices(reference.F, n_approx)
    dec_idx = greedy_scattered_indices(reference.X, n_approx)
    igd_limit = _mean_min_distance(reference.F, reference.F[obj_idx])
    igdx_limit = _mean_min_distance(reference.X, reference.X[dec_idx])
    return (igd_limit, igdx_limit)


__all__ = [
    "MetricReport",
    "igd",
    "igdx",
    "per_mode_igdx",
    "mode_ratio",
    "compute_report",
    "achievable_limits",
    "default_mode_ratio_epsilon",
]
