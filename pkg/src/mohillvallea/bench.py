"""Benchmark harness: run matrices, summaries, significance tests, exports.

Reproduces the budgeted benchmark protocol: a matrix of (problem,
algorithm) cells, each run over a block of consecutive seeds, post-
processed to a bounded approximation set and scored against cached
reference Pareto sets.  Results are written as delimited files (runs,
summaries, traces, archives) with optional rendered figures alongside.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field, asdict
from importlib import resources
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .archive import postprocess_approximation_set
from .core import ORIGIN_HV_TEST, EvaluationCounter, make_rng
from .hillvalley import ClusteringStats, multi_objective_clustering
from .metrics import achievable_limits, compute_report
from .optimizer import RunConfig, RunResult, TraceRow, run
from .problems import (
    Evaluator,
    ReferenceSet,
    cached_reference_set,
    get_problem,
    sample_uniform,
)

logger = logging.getLogger(__name__)

METRICS = ("igd", "igdx")
FIXTURE_RESOURCE = "published_results.csv"


# ---------------------------------------------------------------------------
# algorithm tokens


@dataclass(frozen=True)
class AlgorithmSpec:
    """Decoded algorithm token, e.g. ``mohv-mam`` or ``mamalgam-imamu-ms``."""

    token: str
    variant: str
    niching: bool
    multi_start: bool


def parse_algorithm(token: str) -> AlgorithmSpec:
    """Decode an algorithm token.

    ``mohv-<variant>[-ms]`` is the niching optimizer; ``mamalgam-<variant>[-ms]``
    is the single-cluster baseline with clustering disabled.  Variants:
    mam, mamu, imam, imamu.  The ``-ms`` suffix enables the multi-start
    scheme.
    """
    parts = token.lower().split("-")
    multi_start = False
    if parts and parts[-1] == "ms":
        multi_start = True
        parts = parts[:-1]
    if len(parts) != 2 or parts[0] not in ("mohv", "mamalgam"):
        raise ValueError(f"unrecognized algorithm token {token!r}")
    family, variant = parts
    if variant not in ("mam", "mamu", "imam", "imamu"):
        raise ValueError(f"unrecognized core variant in {token!r}")
    return AlgorithmSpec(
        token=token,
        variant=variant,
        niching=(family == "mohv"),
        multi_start=multi_start,
    )


# ---------------------------------------------------------------------------
# experiment specification and records


@dataclass
class ExperimentSpec:
    """One benchmark experiment: a (problem x algorithm x seed) matrix."""

    problems: list[str]
    algorithms: list[str]
    out_dir: Path
    seed_base: int
    runs: int = 31
    budget: int = 30_000
    n_approx: int = 100
    archive_target: int | None = None  # None: per-problem default
    dimension: int | None = None  # mindist dimension override
    jobs: int = 1
    reference_cache: Path | None = None
    reference_size: int = 5000
    metric_interval: int = 5
    trace_checkpoint: int = 1000
    make_figures: bool = True

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        self.out_dir = Path(self.out_dir)
        for token in self.algorithms:
            parse_algorithm(token)


@dataclass
class RunRecord:
    """Per-run result row."""

    problem: str
    algorithm: str
    run_index: int
    seed: int
    status: str = "ok"
    igd: float = math.nan
    igdx: float = math.nan
    mode_ratio: float = math.nan
    evals: int = 0
    generations: int = 0
    error: str = ""


@dataclass
class ResultTable:
    """Per-run records plus reference limits, with derived summaries."""

    records: list[RunRecord] = field(default_factory=list)
    limits: dict[str, tuple[float, float]] = field(default_factory=dict)

    def values(self, problem: str, algorithm: str, metric: str) -> np.ndarray:
        return np.array(
            [
                getattr(r, metric)
                for r in self.records
                if r.problem == problem and r.algorithm == algorithm and r.status == "ok"
            ]
        )

    def summary_rows(self) -> list[dict]:
        """Rows ``problem,algorithm,metric,mean,sd,limit,n_runs``."""
        rows = []
        seen = []
        for r in self.records:
            key = (r.problem, r.algorithm)
            if key not in seen:
                seen.append(key)
        for problem, algorithm in seen:
            for mi, metric in enumerate(METRICS):
                vals = self.values(problem, algorithm, metric)
                limit = self.limits.get(problem, (math.nan, math.nan))[mi]
                rows.append(
                    {
                        "problem": problem,
                        "algorithm": algorithm,
                        "metric": metric,
                        "mean": float(vals.mean()) if len(vals) else math.nan,
                        "sd": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
                        "limit": limit,
                        "n_runs": int(len(vals)),
                        "source": "this-library",
                    }
                )
        return rows


# ---------------------------------------------------------------------------
# running


def _execute_run(
    problem_name: str,
    dimension: int | None,
    algorithm: str,
    seed: int,
    run_index: int,
    spec_budget: int,
    n_approx: int,
    archive_target: int | None,
    reference: ReferenceSet,
    metric_interval: int,
) -> tuple[RunRecord, list[TraceRow], RunResult | None]:
    problem = get_problem(problem_name, dimension)
    algo = parse_algorithm(algorithm)
    record = RunRecord(problem_name, algorithm, run_index, seed)
    try:
        config = RunConfig(
            problem=problem,
            budget=spec_budget,
            seed=seed,
            variant=algo.variant,
            multi_start=algo.multi_start,
            niching=algo.niching,
            archive_target=archive_target,
            reference=reference,
            metric_interval=metric_interval,
        )
        result = run(config)
        approx = postprocess_approximation_set(result.archive, n_approx)
        report = compute_report(approx, reference)
        record.igd = report.igd
        record.igdx = report.igdx
        record.mode_ratio = report.mode_ratio
        record.evals = result.evals_used
        record.generations = result.generations
        return record, result.trace, result
    except Exception as err:  # noqa: BLE001 -- a failed run must not sink the cell
        logger.exception("run failed: %s %s seed %d", problem_name, algorithm, seed)
        record.status = "failed"
        record.error = f"{type(err).__name__}: {err}"
        return record, [], None


def run_experiment(spec: ExperimentSpec) -> ResultTable:
    """Execute the experiment matrix and write all artifacts to disk."""
    out = spec.out_dir
    (out / "traces").mkdir(parents=True, exist_ok=True)
    (out / "archives").mkdir(exist_ok=True)
    if spec.make_figures:
        (out / "figures").mkdir(exist_ok=True)

    table = ResultTable()
    references: dict[str, ReferenceSet] = {}
    for name in spec.problems:
        problem = get_problem(name, spec.dimension)
        reference = cached_reference_set(
            problem, spec.reference_size, cache_dir=spec.reference_cache
        )
        references[name] = reference
        table.limits[name] = achievable_limits(reference, spec.n_approx)

    cells = list(itertools.product(spec.problems, spec.algorithms))
    for problem_name, algorithm in cells:
        reference = references[problem_name]
        tasks = [
            delayed(_execute_run)(
                problem_name,
                spec.dimension,
                algorithm,
                spec.seed_base + i,
                i,
                spec.budget,
                spec.n_approx,
                spec.archive_target,
                reference,
                spec.metric_interval,
            )
            for i in range(spec.runs)
        ]
        if spec.jobs > 1:
            outputs = Parallel(n_jobs=spec.jobs)(tasks)
        else:
            outputs = [task[0](*task[1], **task[2]) for task in tasks]
        cell_traces = {}
        for record, trace, result in outputs:
            table.records.append(record)
            if record.status != "ok":
                continue
            stem = f"{problem_name}__{algorithm}__seed{record.seed}"
            write_trace_csv(out / "traces" / f"{stem}.csv", trace, spec.trace_checkpoint)
            write_archive_csv(out / "archives" / f"{stem}__archive.csv", result.archive)
            approx = postprocess_approximation_set(result.archive, spec.n_approx)
            write_approximation_csv(
                out / "archives" / f"{stem}__approximation.csv", approx
            )
            cell_traces[record.seed] = trace
        failed = [r for r, _, _ in outputs if r.status != "ok"]
        if failed:
            logger.warning(
                "cell (%s, %s) incomplete: %d/%d runs failed",
                problem_name, algorithm, len(failed), spec.runs,
            )
        if spec.make_figures and cell_traces:
            from .plots import plot_convergence

            plot_convergence(
                cell_traces,
                out / "figures" / f"convergence__{problem_name}__{algorithm}.png",
                problem_name,
                algorithm,
            )

    write_runs_csv(out / "runs.csv", table.records)
    write_summary_csv(out / "summary.csv", table.summary_rows())
    if spec.make_figures:
        from .plots import plot_summary_bars

        plot_summary_bars(table.summary_rows(), out / "figures" / "summary.png")
    return table


# ---------------------------------------------------------------------------
# CSV writers (all float formatting is deterministic)


def _fmt(value: float) -> str:
    if isinstance(value, float) and math.isnan(value):
        return ""
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def write_trace_csv(path: Path, trace: list[TraceRow], checkpoint: int) -> None:
    """Trace rows plus interpolated rows at every crossed checkpoint.

    The archive only changes at generation boundaries, so a checkpoint
    crossed inside a generation carries the state of the previous row.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("evals,instance,N,clusters,archive_size,IGD,IGDX,MR\n")
        previous: TraceRow | None = None
        next_mark = checkpoint
        for row in trace:
            while previous is not None and next_mark < row.evals:
                fh.write(_trace_line(previous, evals=next_mark))
                next_mark += checkpoint
            fh.write(_trace_line(row))
            while next_mark <= row.evals:
                next_mark += checkpoint
            previous = row


def _trace_line(row: TraceRow, evals: int | None = None) -> str:
    cells = [
        str(evals if evals is not None else row.evals),
        str(row.instance),
        str(row.population_size),
        str(row.n_clusters),
        str(row.archive_size),
        _fmt(row.igd),
        _fmt(row.igdx),
        _fmt(row.mode_ratio),
    ]
    return ",".join(cells) + "\n"


def write_runs_csv(path: Path, records: list[RunRecord]) -> None:
    fields = [
        "problem", "algorithm", "run_index", "seed", "status",
        "igd", "igdx", "mode_ratio", "evals", "generations", "error",
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for record in records:
            row = asdict(record)
            for key in ("igd", "igdx", "mode_ratio"):
                row[key] = _fmt(row[key])
            writer.writerow(row)


def write_summary_csv(path: Path, rows: list[dict]) -> None:
    fields = ["problem", "algorithm", "metric", "mean", "sd", "limit", "n_runs", "source"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            out = dict(row)
            for key in ("mean", "sd", "limit"):
                out[key] = _fmt(out[key])
            writer.writerow(out)


def write_archive_csv(path: Path, archive) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        first = archive.all_elites()
        if not first:
            fh.write("subarchive_id\n")
            return
        n, m = len(first[0].x), len(first[0].f)
        header = ["subarchive_id"] + [f"x{i}" for i in range(n)] + [f"f{j}" for j in range(m)]
        fh.write(",".join(header) + "\n")
        for sa in archive.subarchives:
            for sol in sa.elites:
                cells = [str(sa.id)] + [f"{v:.17g}" for v in sol.x] + [f"{v:.17g}" for v in sol.f]
                fh.write(",".join(cells) + "\n")


def write_approximation_csv(path: Path, solutions) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if not solutions:
            fh.write("\n")
            return
        n, m = len(solutions[0].x), len(solutions[0].f)
        header = [f"x{i}" for i in range(n)] + [f"f{j}" for j in range(m)]
        fh.write(",".join(header) + "\n")
        for sol in solutions:
            cells = [f"{v:.17g}" for v in sol.x] + [f"{v:.17g}" for v in sol.f]
            fh.write(",".join(cells) + "\n")


# ---------------------------------------------------------------------------
# rank-sum significance testing


def wilcoxon_rank_sum(x, y) -> tuple[float, float]:
    """Two-sided Wilcoxon rank-sum test; returns ``(statistic, p_value)``.

    The statistic is the rank sum of ``x`` in the pooled sample.  Small
    tie-free samples (both sides <= 12) use the exact null distribution;
    everything else uses the tie-corrected normal approximation.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n1, n2 = len(x), len(y)
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.concatenate([x, y])
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(len(pooled))
    ranks[order] = np.arange(1, len(pooled) + 1)
    # average ranks over ties
    sorted_vals = pooled[order]
    i = 0
    while i < len(pooled):
        j = i
        while j < len(pooled) and sorted_vals[j] == sorted_vals[i]:
            j += 1
        if j - i > 1:
            ranks[order[i:j]] = (i + 1 + j) / 2.0
        i = j
    w = float(ranks[:n1].sum())

    has_ties = len(np.unique(pooled)) < len(pooled)
    if not has_ties and max(n1, n2) <= 12:
        return w, _exact_rank_sum_p(int(round(w)), n1, n2)

    n = n1 + n2
    mean = n1 * (n + 1) / 2.0
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float(((counts**3 - counts).sum())) / (n * (n - 1)) if n > 1 else 0.0
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return w, 1.0
    z = (w - mean) / math.sqrt(var)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return w, min(1.0, p)


def _exact_rank_sum_p(w: int, n1: int, n2: int) -> float:
    """Exact two-sided p-value of the rank-sum statistic (no ties).

    Counts, by dynamic programming, the subsets of ranks ``1..n1+n2`` of
    size ``n1`` for each possible rank sum.
    """
    n = n1 + n2
    max_sum = n1 * n + 1
    counts = np.zeros((n1 + 1, max_sum), dtype=float)
    counts[0, 0] = 1.0
    for rank in range(1, n + 1):
        for k in range(min(rank, n1), 0, -1):
            counts[k, rank:] += counts[k - 1, : max_sum - rank]
    dist = counts[n1]
    total = dist.sum()
    lower = dist[: w + 1].sum() / total
    upper = dist[w:].sum() / total
    return min(1.0, 2.0 * min(lower, upper))


def compare_significance(
    table: ResultTable, alpha_base: float = 0.01, n_tests: int | None = None
) -> list[dict]:
    """Summary rows annotated with best-per-problem marks.

    Performs all pairwise two-sided rank-sum tests per (problem, metric)
    at level ``alpha_base / n_tests`` (Bonferroni); an algorithm is marked
    best when no other algorithm is significantly better on that problem
    and metric.  ``n_tests`` defaults to the number of tests performed.
    """
    rows = table.summary_rows()
    pairs: list[tuple[str, str, str, str]] = []
    problems = sorted({r.problem for r in table.records})
    algorithms = sorted({r.algorithm for r in table.records})
    for problem in problems:
        for metric in METRICS:
            present = [
                a for a in algorithms if len(table.values(problem, a, metric)) > 0
            ]
            for a, b in itertools.combinations(present, 2):
                pairs.append((problem, metric, a, b))
    if n_tests is None:
        n_tests = max(1, len(pairs))
    alpha = alpha_base / n_tests

    worse: set[tuple[str, str, str]] = set()
    for problem, metric, a, b in pairs:
        va = table.values(problem, a, metric)
        vb = table.values(problem, b, metric)
        if len(va) < 2 or len(vb) < 2:
            continue
        _, p = wilcoxon_rank_sum(va, vb)
        if p < alpha:
            if va.mean() > vb.mean():
                worse.add((problem, metric, a))
            elif vb.mean() > va.mean():
                worse.add((problem, metric, b))
    for row in rows:
        key = (row["problem"], row["metric"], row["algorithm"])
        row["best"] = 0 if key in worse else 1
        row["alpha"] = alpha
    return rows


# ---------------------------------------------------------------------------
# published fixture results


def load_fixture_rows(path: Path | None = None) -> list[dict]:
    """Published benchmark results shipped with the package.

    Rows carry ``source=paper`` so merged tables clearly separate
    published values from locally computed ones.
    """
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
    else:
        text = (
            resources.files("mohillvallea.data").joinpath(FIXTURE_RESOURCE)
            .read_text(encoding="utf-8")
        )
    rows = []
    reader = csv.DictReader(text.splitlines())
    for raw in reader:
        rows.append(
            {
                "problem": raw["problem"],
                "algorithm": raw["algorithm"],
                "metric": raw["metric"],
                "mean": float(raw["mean"]) if raw["mean"] else math.nan,
                "sd": float(raw["sd"]) if raw["sd"] else math.nan,
                "limit": float(raw["limit"]) if raw["limit"] else math.nan,
                "n_runs": int(raw["n_runs"]) if raw["n_runs"] else 0,
                "source": raw.get("source", "paper"),
            }
        )
    return rows


def export_fixture_comparison(
    summary_rows: list[dict], fixture_rows: list[dict] | None = None
) -> list[dict]:
    """Merge locally computed summary rows with published fixture rows.

    Fixture rows for problems absent from the local summary are kept, so
    the merged table is a superset; rows sort by problem, metric, source.
    """
    if fixture_rows is None:
        fixture_rows = load_fixture_rows()
    merged = [dict(r) for r in summary_rows] + [dict(r) for r in fixture_rows]
    merged.sort(
        key=lambda r: (r["problem"], r["metric"], r.get("source", ""), r["algorithm"])
    )
    return merged


# ---------------------------------------------------------------------------
# clustering snapshots (decision-space niching visualization)


def clustering_snapshot(
    problem_name: str,
    n_samples: int,
    seed: int,
    dimension: int | None = None,
) -> tuple[list, ClusteringStats, int]:
    """Cluster a fresh uniform sample; returns (clusters, stats, evals)."""
    problem = get_problem(problem_name, dimension)
    counter = EvaluationCounter()
    evaluate = Evaluator(problem, counter)
    rng = make_rng(seed)
    population = sample_uniform(problem, n_samples, rng, counter=counter)
    stats = ClusteringStats()
    clusters = multi_objective_clustering(
        population, evaluate, problem.domain_width, stats=stats
    )
    return clusters, stats, counter.used


def write_snapshot_csv(path: Path, clusters, n: int, m: int) -> None:
    """Snapshot rows ``x...,f...,cluster_id,is_test_point``."""
    header = (
        [f"x{i}" for i in range(n)]
        + [f"f{j}" for j in range(m)]
        + ["cluster_id", "is_test_point"]
    )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for cluster in clusters:
            for sol in cluster.members:
                cells = (
                    [f"{v:.17g}" for v in sol.x]
                    + [f"{v:.17g}" for v in sol.f]
                    + [str(cluster.id), str(int(sol.origin == ORIGIN_HV_TEST))]
                )
                fh.write(",".join(cells) + "\n")
