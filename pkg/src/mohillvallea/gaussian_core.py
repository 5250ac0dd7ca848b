"""Per-niche Gaussian model building and offspring sampling.

One generation of the core optimizer works on a single cluster: rank the
cluster, carve it into overlapping subsets (single-objective-best subsets
plus balanced leader clusters of the rank selection), estimate a Gaussian
per subset, and sample offspring.  Four variants are supported: full or
diagonal covariance, each either re-estimated from scratch or smoothed
incrementally across generations.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist

from .archive import greedy_scattered_subset_selection
from .core import (
    ORIGIN_FRESH,
    BudgetExhausted,
    Solution,
    fast_nondominated_sort,
    stack_f,
    stack_x,
)

logger = logging.getLogger(__name__)

VARIANTS = ("mam", "mamu", "imam", "imamu")

KIND_OBJECTIVE = "objective"
KIND_RANK = "rank"


@dataclass
class CoreConfig:
    """Tunable parameters of the model-building core."""

    variant: str = "mam"
    tau: float = 0.35  # selection fraction
    subset_size_floor: int = 2
    mean_smoothing: float = 0.8  # incremental variants: rate toward new mean
    cov_smoothing: float = 0.6  # incremental variants: rate toward new covariance
    ams_fraction: float = 0.1  # fraction of offspring receiving anticipated mean shift
    ams_factor: float = 2.0
    multiplier_min: float = 1e-6
    multiplier_max: float = 1e3
    multiplier_decay: float = 0.9
    improvement_fraction: float = 0.1

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")

    @property
    def univariate(self) -> bool:
        return self.variant in ("mamu", "imamu")

    @property
    def incremental(self) -> bool:
        return self.variant in ("imam", "imamu")

    def subset_size(self, cluster_size: int, k: int) -> int:
        """Subset size: twice the selection size split over ``k`` subsets."""
        selected = max(1, math.floor(self.tau * cluster_size))
        return max(self.subset_size_floor, math.ceil(2 * selected / max(k, 1)))


@dataclass
class SubsetModel:
    """One Gaussian search distribution inside a cluster."""

    kind: str  # KIND_OBJECTIVE or KIND_RANK
    objective: int  # objective index for single-objective subsets, else -1
    mean: np.ndarray
    covariance: np.ndarray  # (n, n) full or (n,) diagonal variances
    objective_mean: np.ndarray
    multiplier: float = 1.0
    displacement: np.ndarray | None = None  # mean shift vs. registered predecessor

    @property
    def univariate(self) -> bool:
        return self.covariance.ndim == 1


@dataclass
class ClusterModelState:
    """Model parameters carried by one cluster across generations."""

    subsets: list[SubsetModel] = field(default_factory=list)
    generation_index: int = 0


def rank_and_select(
    members: Sequence[Solution], tau: float, rng: np.random.Generator
) -> list[int]:
    """Indices of the ``floor(tau * len)`` best solutions by domination rank.

    Whole fronts are taken in order; the front crossing the cutoff is
    thinned uniformly at random.  At least one solution is returned.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    n = len(members)
    n_select = max(1, math.floor(tau * n))
    fronts = fast_nondominated_sort(stack_f(members))
    selected: list[int] = []
    for front in fronts:
        if len(selected) + len(front) <= n_select:
            selected.extend(int(i) for i in front)
        else:
            need = n_select - len(selected)
            pick = rng.choice(len(front), size=need, replace=False)
            selected.extend(sorted(int(front[i]) for i in pick))
        if len(selected) >= n_select:
            break
    return selected


def form_subsets(
    members: Sequence[Solution],
    k: int,
    subset_size: int,
    tau: float,
    rng: np.random.Generator,
) -> list[tuple[str, int, list[int]]]:
    """Carve a cluster into up to ``k`` overlapping subsets.

    When ``k`` exceeds the objective count ``m``, the first ``m`` subsets
    hold the ``subset_size`` single-objective-best solutions; the rest
    come from balanced leader clustering (objective space, farthest-first
    leaders) of the rank selection.  With ``k <= m`` all subsets come from
    leader clustering.  Returns ``(kind, objective, member_indices)``
    triples.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    F = stack_f(members)
    m = F.shape[1]
    size = min(subset_size, len(members))
    subsets: list[tuple[str, int, list[int]]] = []

    n_single = m if k > m else 0
    for objective in range(n_single):
        order = np.argsort(F[:, objective], kind="stable")
        subsets.append((KIND_OBJECTIVE, objective, [int(i) for i in order[:size]]))

    n_leader = k - n_single
    selection = rank_and_select(members, tau, rng)
    n_leader = min(n_leader, len(selection))
    if n_leader > 0:
        F_sel = F[selection]
        leaders = _farthest_first_leaders(F_sel, n_leader)
        D = cdist(F_sel[leaders], F_sel)
        take = min(size, len(selection))
        for row in D:
            order = np.lexsort((np.arange(len(selection)), row))
            subsets.append(
                (KIND_RANK, -1, [selection[int(i)] for i in order[:take]])
            )
    return subsets


def _farthest_first_leaders(F: np.ndarray, k: int) -> list[int]:
    """Greedy farthest-first leader indices; first leader is row 0.

    Rows are assumed rank-ordered best-first, so row 0 is the best-ranked
    selected solution.  Ties resolve to the lowest index.
    """
    leaders = [0]
    if k == 1:
        return leaders
    dist = np.linalg.norm(F - F[0], axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(dist))
        leaders.append(nxt)
        np.minimum(dist, np.linalg.norm(F - F[nxt], axis=1), out=dist)
    return leaders


def estimate_model(
    subset: Sequence[Solution],
    kind: str,
    objective: int,
    config: CoreConfig,
    previous: SubsetModel | None,
    domain_width: np.ndarray,
) -> SubsetModel:
    """Maximum-likelihood Gaussian for a subset, optionally smoothed.

    Incremental variants blend the raw estimate with the registered
    predecessor; the adaptive multiplier always carries over.  A collapsed
    covariance is re-inflated from the domain width.
    """
    X = stack_x(subset)
    raw_mean = X.mean(axis=0)
    centered = X - raw_mean
    if config.univariate:
        raw_cov: np.ndarray = (centered**2).mean(axis=0)
    else:
        raw_cov = centered.T @ centered / len(X)
        raw_cov = (raw_cov + raw_cov.T) / 2.0

    if previous is not None and config.incremental:
        mean = previous.mean + config.mean_smoothing * (raw_mean - previous.mean)
        cov = previous.covariance + config.cov_smoothing * (
            raw_cov - previous.covariance
        )
    else:
        mean, cov = raw_mean, raw_cov

    cov = _reinflate_if_collapsed(cov, domain_width)
    return SubsetModel(
        kind=kind,
        objective=objective,
        mean=mean,
        covariance=cov,
        objective_mean=stack_f(subset).mean(axis=0),
        multiplier=previous.multiplier if previous is not None else 1.0,
        displacement=(mean - previous.mean) if previous is not None else None,
    )


def _reinflate_if_collapsed(cov: np.ndarray, domain_width: np.ndarray) -> np.ndarray:
    floor_sd = 1e-6 * domain_width
    if cov.ndim == 1:
        return np.where(cov > 0.0, cov, floor_sd**2)
    if np.trace(cov) <= 0.0:
        return np.diag(floor_sd**2)
    return cov


def _cholesky_factor(model: SubsetModel) -> np.ndarray | None:
    """Lower-triangular factor of the full covariance, with escalating
    diagonal regularization; None means fall back to the diagonal."""
    cov = model.covariance
    n = cov.shape[0]
    bump = 1e-10 * np.trace(cov) / n
    for attempt in range(4):
        try:
            return np.linalg.cholesky(cov if attempt == 0 else cov + bump * np.eye(n))
        except np.linalg.LinAlgError:
            bump *= 10.0 if attempt else 1.0
    return None


def sample_offspring(
    model: SubsetModel,
    count: int,
    repair: Callable[[np.ndarray], np.ndarray],
    evaluate: Callable[[np.ndarray], np.ndarray],
    rng: np.random.Generator,
    config: CoreConfig,
) -> list[Solution]:
    """Draw, repair, and evaluate ``count`` offspring from a subset model.

    The leading ``ams_fraction`` of the draws is shifted along the model's
    generational mean displacement (anticipated mean shift).  Raises
    BudgetExhausted via ``evaluate`` when the budget runs out; whatever
    the evaluator declined is not returned.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    n = len(model.mean)
    z = rng.standard_normal((count, n))
    if model.univariate:
        steps = z * np.sqrt(model.covariance)[None, :]
        factor = None
    else:
        factor = _cholesky_factor(model)
        if factor is None:
            logger.warning(
                "covariance factorization failed; sampling from diagonal this generation"
            )
            steps = z * np.sqrt(np.maximum(np.diag(model.covariance), 0.0))[None, :]
        else:
            steps = z @ factor.T
    X = model.mean + model.multiplier * steps
    if model.displacement is not None and config.ams_fraction > 0.0:
        n_shift = math.floor(config.ams_fraction * count)
        X[:n_shift] += config.ams_factor * model.displacement
    X = repair(X)
    F = evaluate(X)
    return [Solution(x, f, origin=ORIGIN_FRESH) for x, f in zip(X, F)]


def adapt_multiplier(
    model: SubsetModel,
    offspring: Sequence[Solution],
    elites: Sequence[Solution],
    config: CoreConfig,
) -> float:
    """Update the model's variance multiplier from this generation's offspring.

    An offspring improves when it strictly dominates at least one elite of
    the niche, i.e. it pushes the niche's front rather than merely filling
    a gap in it (with no elites, everything improves).  Scarce improvements
    shrink the multiplier; improvements concentrated beyond one standard
    radius of the sampling distribution grow it; otherwise it decays toward
    1.  The result is clamped to the configured bounds and stored on the
    model.
    """
    if not offspring:
        return model.multiplier
    if elites:
        F_el = stack_f(elites)
        improving = np.array(
            [
                bool(np.any(np.all(f <= F_el, axis=1) & np.any(f < F_el, axis=1)))
                for f in stack_f(offspring)
            ]
        )
    else:
        improving = np.ones(len(offspring), dtype=bool)

    multiplier = model.multiplier
    if improving.mean() < config.improvement_fraction:
        multiplier *= config.multiplier_decay
    elif _improvements_far(model, [offspring[i] for i in np.flatnonzero(improving)]):
        multiplier /= config.multiplier_decay
    else:
        if multiplier > 1.0:
            multiplier = max(1.0, multiplier * config.multiplier_decay)
        elif multiplier < 1.0:
            multiplier = min(1.0, multiplier / config.multiplier_decay)
    multiplier = float(np.clip(multiplier, config.multiplier_min, config.multiplier_max))
    model.multiplier = multiplier
    return multiplier


def _improvements_far(model: SubsetModel, improving: list[Solution]) -> bool:
    """True when improving offspring average beyond one standard radius."""
    if not improving:
        return False
    X = stack_x(improving)
    delta = (X - model.mean) / max(model.multiplier, 1e-300)
    if model.univariate:
        sd = np.sqrt(np.maximum(model.covariance, 1e-300))
        z2 = ((delta / sd) ** 2).sum(axis=1)
    else:
        factor = _cholesky_factor(model)
        if factor is None:
            sd = np.sqrt(np.maximum(np.diag(model.covariance), 1e-300))
            z2 = ((delta / sd) ** 2).sum(axis=1)
        else:
            z = solve_triangular(factor, delta.T, lower=True).T
            z2 = (z**2).sum(axis=1)
    n = X.shape[1]
    return bool(np.sqrt(z2 / n).mean() > 1.0)


def register_subsets(
    current: Sequence[tuple[str, int, np.ndarray]],
    previous: Sequence[SubsetModel],
) -> list[SubsetModel | None]:
    """Match new subsets to the previous generation's by objective-space mean.

    Single-objective subsets pair with their same-objective predecessor
    when one exists in both generations; everything else maps to the
    nearest previous subset (many-to-one allowed).  An empty previous list
    maps everything to None.
    """
    if not previous:
        return [None] * len(current)
    prev_means = np.stack([p.objective_mean for p in previous])
    prev_by_objective = {
        p.objective: p for p in previous if p.kind == KIND_OBJECTIVE
    }
    mapping: list[SubsetModel | None] = []
    for kind, objective, mean in current:
        if kind == KIND_OBJECTIVE and objective in prev_by_objective:
            mapping.append(prev_by_objective[objective])
            continue
        d = np.linalg.norm(prev_means - np.asarray(mean), axis=1)
        mapping.append(previous[int(np.argmin(d))])
    return mapping


def core_opt_generation(
    members: Sequence[Solution],
    elites: Sequence[Solution],
    state: ClusterModelState,
    n_offspring: int,
    k_subsets: int,
    config: CoreConfig,
    evaluate,
    repair: Callable[[np.ndarray], np.ndarray],
    domain_width: np.ndarray,
    rng: np.random.Generator,
    instance_id: int = 0,
    generation_index: int = 0,
) -> tuple[list[Solution], ClusterModelState]:
    """One core-optimizer generation for a single cluster.

    Re-injects up to ``floor(tau * population)`` elites (picked for
    objective-space spread, with the cluster plus offspring budget as the
    population size) into the working population, forms subsets, estimates
    or updates one Gaussian per subset, and samples exactly
    ``n_offspring`` offspring split evenly across the subsets.
    """
    if n_offspring < 1:
        raise ValueError(f"n_offspring must be >= 1, got {n_offspring}")
    n_inject = max(1, math.floor(config.tau * (len(members) + n_offspring)))
    working = list(members)
    if n_inject > 0 and elites:
        member_ids = {id(s) for s in working}
        chosen = greedy_scattered_subset_selection(
            list(elites), min(n_inject, len(elites)), space="objective"
        )
        working.extend(s for s in chosen if id(s) not in member_ids)
    if not working:
        return [], state

    subset_size = config.subset_size(len(working), k_subsets)
    subsets = form_subsets(working, k_subsets, subset_size, config.tau, rng)
    descriptors = [
        (kind, objective, stack_f([working[i] for i in idx]).mean(axis=0))
        for kind, objective, idx in subsets
    ]
    predecessors = register_subsets(descriptors, state.subsets)

    models: list[SubsetModel] = []
    for (kind, objective, idx), previous in zip(subsets, predecessors):
        models.append(
            estimate_model(
                [working[i] for i in idx], kind, objective, config, previous,
                domain_width,
            )
        )

    counts = _split_offspring(n_offspring, len(models))
    offspring: list[Solution] = []
    exhausted: BudgetExhausted | None = None
    for model, count in zip(models, counts):
        if count == 0:
            continue
        try:
            batch = sample_offspring(model, count, repair, evaluate, rng, config)
        except BudgetExhausted as err:
            exhausted = err
            break
        adapt_multiplier(model, batch, elites, config)
        for sol in batch:
            sol.instance_id = instance_id
            sol.birth_gen = generation_index
        offspring.extend(batch)
    if exhausted is not None:
        raise exhausted

    new_state = ClusterModelState(
        subsets=models, generation_index=state.generation_index + 1
    )
    return offspring, new_state


def _split_offspring(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]
