"""Main generational loop: niching, per-cluster budgets, multi-start scheme.

Every generation the population (all elites plus fresh offspring) is
re-clustered into niches; each niche runs one generation of the Gaussian
core and contributes a subarchive to the shared elitist archive.  Model
state survives across generations by linking each new cluster to the
nearest cluster of the previous generation.

The multi-start scheme interleaves instances with doubling population
sizes on an 8:1 generation schedule, all feeding one shared archive;
instances that stop contributing are terminated.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .archive import ElitistArchive, Subarchive, construct_local_archives
from .core import (
    ORIGIN_ELITE,
    ORIGIN_HV_TEST,
    BudgetExhausted,
    EvaluationCounter,
    Solution,
    make_rng,
)
from .gaussian_core import ClusterModelState, CoreConfig, core_opt_generation
from .hillvalley import (
    Cluster,
    ClusteringStats,
    elite_shortcut_policy,
    multi_objective_clustering,
)
from .metrics import MetricReport, compute_report
from .problems import (
    Evaluator,
    Problem,
    ReferenceSet,
    default_archive_size,
    default_mode_ratio_epsilon,
    sample_uniform,
)

logger = logging.getLogger(__name__)

MULTI_START_BLOCK = 8  # generations of an instance per generation of the next


def protocol_population_size(n: int, k: int = 20) -> int:
    """Fixed-budget protocol population size ``k * floor(17 + 3 n^1.5) / 2``."""
    return k * math.floor(17.0 + 3.0 * n**1.5) // 2


def base_population_size(m: int, n: int) -> int:
    """First multi-start instance size ``10 (1+m) (1+log n)``, rounded.

    Natural logarithm, rounded to the nearest integer.
    """
    return int(round(10.0 * (1.0 + m) * (1.0 + math.log(n))))


def base_subset_count(m: int) -> int:
    return 1 + m


def distribute_budgets(
    cluster_sizes: Sequence[int], n_population: int, k_subsets: int
) -> list[tuple[int, int]]:
    """Per-cluster offspring and subset budgets ``(N_i, k_i)``.

    Every cluster receives the same offspring count ``floor(N / #clusters)``
    (at least 1); subset counts split proportionally to cluster size with
    a floor of 1.
    """
    total = sum(cluster_sizes)
    n_each = max(1, n_population // len(cluster_sizes))
    return [
        (n_each, max(1, k_subsets * size // max(total, 1)))
        for size in cluster_sizes
    ]


@dataclass
class RunConfig:
    """Configuration of one optimizer run."""

    problem: Problem
    budget: int | None = 30_000
    seed: int = 0
    variant: str = "mam"
    multi_start: bool = False
    population_size: int | None = None  # default: protocol (fixed) or base (multi-start)
    subset_count: int | None = None  # default: 20 (fixed) or 1+m (multi-start)
    archive_target: int | None = None  # default: 1000 (m=2) or 2500 (m=3)
    niching: bool = True  # False: single-cluster core-optimizer baseline
    n_neighbors: int | None = None
    core: CoreConfig | None = None
    reference: ReferenceSet | None = None
    mode_ratio_epsilon: float | None = None
    metric_interval: int = 1  # generations between metric refreshes in the trace
    trace_checkpoint_evals: int = 1000
    stop_at_mode_ratio: float | None = None

    def resolved_population_size(self) -> int:
        if self.population_size is not None:
            return self.population_size
        if self.multi_start:
            return base_population_size(self.problem.m, self.problem.n)
        return protocol_population_size(self.problem.n)

    def resolved_subset_count(self) -> int:
        if self.subset_count is not None:
            return self.subset_count
        if self.multi_start:
            return base_subset_count(self.problem.m)
        return 20

    def resolved_archive_target(self) -> int:
        if self.archive_target is not None:
            return self.archive_target
        return default_archive_size(self.problem)

    def resolved_core(self) -> CoreConfig:
        if self.core is not None:
            if self.core.variant != self.variant:
                raise ValueError("core config variant disagrees with run variant")
            return self.core
        return CoreConfig(variant=self.variant)


@dataclass
class TraceRow:
    """One per-generation snapshot of a run."""

    evals: int
    instance: int
    population_size: int
    n_clusters: int
    archive_size: int
    igd: float = math.nan
    igdx: float = math.nan
    mode_ratio: float = math.nan


@dataclass
class RunResult:
    archive: ElitistArchive
    trace: list[TraceRow]
    evals_used: int
    generations: int
    instance_sizes: list[int]
    final_report: MetricReport | None = None
    stopped_on_target: bool = False


@dataclass
class _Niche:
    cluster: Cluster
    working: list[Solution]
    subarchive: Subarchive
    state: ClusterModelState = field(default_factory=ClusterModelState)


@dataclass
class _Instance:
    id: int
    size: int
    k_subsets: int
    niches: list[_Niche] = field(default_factory=list)
    generations: int = 0
    last_contribution: int = 0


class _Run:
    """Single-threaded execution state of one optimizer run."""

    def __init__(self, config: RunConfig) -> None:
        self.cfg = config
        self.problem = config.problem
        self.counter = EvaluationCounter(budget=config.budget)
        self.evaluate = Evaluator(self.problem, self.counter)
        self.rng = make_rng(config.seed)
        self.core = config.resolved_core()
        self.archive = ElitistArchive(target_size=config.resolved_archive_target())
        self.trace: list[TraceRow] = []
        self.instances: list[_Instance] = []
        self.created_sizes: list[int] = []
        self.total_generations = 0
        self.stopped_on_target = False
        self.epsilon = (
            config.mode_ratio_epsilon
            if config.mode_ratio_epsilon is not None
            else default_mode_ratio_epsilon(self.problem)
        )
        self._last_metrics: tuple[float, float, float] = (math.nan,) * 3
        self._metrics_age = -1

    # -- population assembly -------------------------------------------------

    def _elite_population(self) -> list[Solution]:
        elites: list[Solution] = []
        for sa in self.archive.subarchives:
            for sol in sa.elites:
                sol.origin = ORIGIN_ELITE
                sol.subarchive_id = sa.id
                elites.append(sol)
        return elites

    def _cluster(self, population: list[Solution]) -> list[Cluster]:
        if not self.cfg.niching:
            return [Cluster(id=0, members=list(population))]
        stats = ClusteringStats()
        clusters = multi_objective_clustering(
            population,
            self.evaluate,
            self.problem.domain_width,
            policy=elite_shortcut_policy,
            n_neighbors=self.cfg.n_neighbors,
            stats=stats,
        )
        logger.debug(
            "clustering: %d solutions -> %d clusters, %d probe evals (mean N_t %.2f)",
            len(population),
            len(clusters),
            stats.points_evaluated,
            stats.mean_test_points,
        )
        return clusters

    def _rebuild_niches(
        self, instance: _Instance, clusters: list[Cluster], remove_elites: bool
    ) -> None:
        archive = construct_local_archives(clusters, self.archive.target_size)
        elite_ids = {id(s) for s in archive.all_elites()}
        previous = instance.niches
        niches: list[_Niche] = []
        for cluster, subarchive in zip(clusters, archive.subarchives):
            working = (
                [s for s in cluster.members if id(s) not in elite_ids]
                if remove_elites
                else list(cluster.members)
            )
            niches.append(_Niche(cluster, working, subarchive))
        if previous:
            prev_means = np.stack([n.cluster.mean for n in previous])
            for niche in niches:
                d = np.linalg.norm(prev_means - niche.cluster.mean, axis=1)
                niche.state = previous[int(np.argmin(d))].state
        instance.niches = niches
        self.archive = archive

    def _count_contribution(self, instance: _Instance, generation: int) -> int:
        return sum(
            1
            for sol in self.archive.all_elites()
            if sol.instance_id == instance.id
            and sol.birth_gen == generation
            and sol.origin != ORIGIN_HV_TEST
        )

    # -- generations ----------------------------------------------------------

    def _initialize_instance(self, instance: _Instance) -> None:
        sample = sample_uniform(
            self.problem, instance.size, self.rng, counter=self.counter
        )
        for sol in sample:
            sol.instance_id = instance.id
            sol.birth_gen = 0
        population = self._elite_population() + sample
        clusters = self._cluster(population)
        # initialization keeps elites inside the working clusters
        self._rebuild_niches(instance, clusters, remove_elites=False)
        instance.generations = 1
        instance.last_contribution = self._count_contribution(instance, 0)
        self.total_generations += 1
        self._emit_trace(instance)

    def _run_generation(self, instance: _Instance) -> None:
        generation = instance.generations
        budgets = distribute_budgets(
            [len(n.cluster.members) for n in instance.niches],
            instance.size,
            instance.k_subsets,
        )
        offspring: list[Solution] = []
        for niche, (n_i, k_i) in zip(instance.niches, budgets):
            batch, niche.state = core_opt_generation(
                niche.working,
                niche.subarchive.elites,
                niche.state,
                n_i,
                k_i,
                self.core,
                self.evaluate,
                self.problem.repair_to_bounds,
                self.problem.domain_width,
                self.rng,
                instance_id=instance.id,
                generation_index=generation,
            )
            offspring.extend(batch)
        population = self._elite_population() + offspring
        clusters = self._cluster(population)
        self._rebuild_niches(instance, clusters, remove_elites=True)
        instance.generations += 1
        instance.last_contribution = self._count_contribution(instance, generation)
        self.total_generations += 1
        self._emit_trace(instance)

    # -- tracing --------------------------------------------------------------

    def _emit_trace(self, instance: _Instance) -> None:
        row = TraceRow(
            evals=self.counter.used,
            instance=instance.id,
            population_size=instance.size,
            n_clusters=len(instance.niches),
            archive_size=self.archive.total_size(),
        )
        if self.cfg.reference is not None:
            refresh = (
                self.total_generations - self._metrics_age >= self.cfg.metric_interval
            )
            if refresh:
                report = compute_report(
                    self.archive.all_elites(), self.cfg.reference, self.epsilon
                )
                self._last_metrics = report.as_tuple()
                self._metrics_age = self.total_generations
                target = self.cfg.stop_at_mode_ratio
                if target is not None and report.mode_ratio >= target:
                    self.stopped_on_target = True
            row.igd, row.igdx, row.mode_ratio = self._last_metrics
        self.trace.append(row)

    # -- schedules ------------------------------------------------------------

    def run(self) -> RunResult:
        multi = self.cfg.multi_start
        size = self.cfg.resolved_population_size()
        k = self.cfg.resolved_subset_count()
        first = _Instance(id=0, size=size, k_subsets=k)
        self.instances = [first]
        self.created_sizes = [size]
        try:
            self._initialize_instance(first)
            while not self.stopped_on_target:
                if multi:
                    self._schedule_slot(0)
                else:
                    self._run_generation(first)
        except BudgetExhausted:
            pass
        return self._result()

    def _schedule_slot(self, level: int) -> None:
        """Run one schedule slot; every 8th generation cascades one level up."""
        if level == len(self.instances):
            self._spawn_instance()
            return
        instance = self.instances[level]
        self._run_generation(instance)
        if self.stopped_on_target:
            return
        if instance.generations % MULTI_START_BLOCK == 0:
            self._schedule_slot(level + 1)

    def _spawn_instance(self) -> None:
        last = self.instances[-1]
        new = _Instance(
            id=len(self.created_sizes),
            size=last.size * 2,
            k_subsets=max(last.k_subsets, round(1.5 * last.k_subsets)),
        )
        self._terminate_weak_instances()
        self.instances.append(new)
        self.created_sizes.append(new.size)
        self._initialize_instance(new)

    def _terminate_weak_instances(self) -> None:
        """Drop instances contributing <25% of the latest elite intake.

        Called when a new instance spawns; the most recent instance is
        protected.  With no contributions at all nothing is terminated.
        """
        if len(self.instances) <= 1:
            return
        protected = self.instances[-1]
        total = sum(inst.last_contribution for inst in self.instances)
        if total <= 0:
            return
        survivors = [
            inst
            for inst in self.instances
            if inst is protected or inst.last_contribution >= 0.25 * total
        ]
        for inst in self.instances:
            if inst not in survivors:
                logger.debug(
                    "terminating instance %d (N=%d, contribution %d/%d)",
                    inst.id, inst.size, inst.last_contribution, total,
                )
        self.instances = survivors

    def _result(self) -> RunResult:
        report = None
        if self.cfg.reference is not None:
            report = compute_report(
                self.archive.all_elites(), self.cfg.reference, self.epsilon
            )
        return RunResult(
            archive=self.archive,
            trace=self.trace,
            evals_used=self.counter.used,
            generations=self.total_generations,
            instance_sizes=list(self.created_sizes),
            final_report=report,
            stopped_on_target=self.stopped_on_target,
        )


def run(config: RunConfig) -> RunResult:
    """Execute one optimizer run to its budget (or early-stop target)."""
    return _Run(config).run()


def fixed_population_run(config: RunConfig) -> RunResult:
    """Run with a fixed population size (the benchmark-table protocol)."""
    if config.multi_start:
        raise ValueError("fixed_population_run requires multi_start=False")
    return run(config)


def multi_start_run(config: RunConfig) -> RunResult:
    """Run the interleaved multi-start scheme with doubling population sizes."""
    if not config.multi_start:
        raise ValueError("multi_start_run requires multi_start=True")
    return run(config)
