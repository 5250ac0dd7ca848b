"""Command-line benchmark harness.

Subcommands:

* ``run``: execute a (problem x algorithm x seed) experiment matrix.
* ``compare``: merge run summaries with published fixture results and
  annotate significance.
* ``limits``: best achievable IGD/IGDX for a bounded approximation size.
* ``cluster-snapshot``: cluster one uniform sample and export it.
* ``reference-set``: generate and export a reference Pareto set.

Every subcommand writes delimited files; report paths also render PNG
figures alongside unless ``--no-figures`` is given.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

from . import bench
from .metrics import achievable_limits
from .archive import greedy_scattered_indices
from .problems import (
    PROBLEM_NAMES,
    cached_reference_set,
    get_problem,
)

logger = logging.getLogger(__name__)

ALGORITHM_CHOICES = [
    f"{family}-{variant}{suffix}"
    for family in ("mohv", "mamalgam")
    for variant in ("mam", "mamu", "imam", "imamu")
    for suffix in ("", "-ms")
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mohv",
        description="Multi-modal multi-objective optimization benchmark harness",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment matrix")
    run_p.add_argument("--problem", action="append", required=True,
                       choices=PROBLEM_NAMES, help="benchmark problem (repeatable)")
    run_p.add_argument("--algo", action="append", required=True,
                       choices=ALGORITHM_CHOICES, help="algorithm token (repeatable)")
    run_p.add_argument("--runs", type=int, default=31, help="runs per cell")
    run_p.add_argument("--budget", type=int, default=30_000,
                       help="evaluation budget per run")
    run_p.add_argument("--na", type=int, default=100, help="approximation set size")
    run_p.add_argument("--ne", type=int, default=None,
                       help="elitist archive target size (default per problem)")
    run_p.add_argument("--n", type=int, default=None,
                       help="decision dimension (mindist problems only)")
    run_p.add_argument("--seed", type=int, required=True, help="base seed")
    run_p.add_argument("--out", type=Path, required=True, help="output directory")
    run_p.add_argument("--jobs", type=int, default=1, help="parallel runs")
    run_p.add_argument("--ref-cache", type=Path, default=None,
                       help="reference-set cache directory")
    run_p.add_argument("--metric-interval", type=int, default=5,
                       help="generations between trace metric refreshes")
    run_p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    cmp_p = sub.add_parser("compare", help="significance-annotated comparison table")
    cmp_p.add_argument("--runs-csv", type=Path, action="append", required=True,
                       help="runs.csv produced by `run` (repeatable)")
    cmp_p.add_argument("--fixtures", type=Path, default=None,
                       help="fixture CSV (default: packaged published results)")
    cmp_p.add_argument("--no-fixtures", action="store_true",
                       help="do not merge fixture rows")
    cmp_p.add_argument("--alpha", type=float, default=0.01, help="base significance level")
    cmp_p.add_argument("--tests", type=int, default=None,
                       help="Bonferroni divisor (default: number of tests performed)")
    cmp_p.add_argument("--out", type=Path, required=True, help="output directory")
    cmp_p.add_argument("--no-figures", action="store_true")

    lim_p = sub.add_parser("limits", help="achievable IGD/IGDX limits")
    lim_p.add_argument("--problem", action="append", required=True, choices=PROBLEM_NAMES)
    lim_p.add_argument("--na", type=int, default=100)
    lim_p.add_argument("--count", type=int, default=5000, help="reference set size")
    lim_p.add_argument("--n", type=int, default=None)
    lim_p.add_argument("--ref-cache", type=Path, default=None)
    lim_p.add_argument("--out", type=Path, required=True)
    lim_p.add_argument("--no-figures", action="store_true")

    snap_p = sub.add_parser("cluster-snapshot", help="cluster one uniform sample")
    snap_p.add_argument("--problem", required=True, choices=PROBLEM_NAMES)
    snap_p.add_argument("--samples", type=int, default=10_000)
    snap_p.add_argument("--seed", type=int, required=True)
    snap_p.add_argument("--n", type=int, default=None)
    snap_p.add_argument("--out", type=Path, required=True)
    snap_p.add_argument("--no-figures", action="store_true")

    ref_p = sub.add_parser("reference-set", help="export a reference Pareto set")
    ref_p.add_argument("--problem", action="append", required=True, choices=PROBLEM_NAMES)
    ref_p.add_argument("--count", type=int, default=5000)
    ref_p.add_argument("--n", type=int, default=None)
    ref_p.add_argument("--out", type=Path, required=True)
    ref_p.add_argument("--no-figures", action="store_true")
    return parser


def _cmd_run(args) -> int:
    spec = bench.ExperimentSpec(
        problems=args.problem,
        algorithms=args.algo,
        out_dir=args.out,
        seed_base=args.seed,
        runs=args.runs,
        budget=args.budget,
        n_approx=args.na,
        archive_target=args.ne,
        dimension=args.n,
        jobs=args.jobs,
        reference_cache=args.ref_cache,
        metric_interval=args.metric_interval,
        make_figures=not args.no_figures,
    )
    started = time.time()
    table = bench.run_experiment(spec)
    failed = [r for r in table.records if r.status != "ok"]
    print(f"completed {len(table.records)} runs in {time.time() - started:.1f}s "
          f"({len(failed)} failed); outputs in {spec.out_dir}")
    for row in table.summary_rows():
        print(f"  {row['problem']:<12} {row['algorithm']:<16} {row['metric']:<5}"
              f" mean={row['mean']:.4g} sd={row['sd']:.4g} limit={row['limit']:.4g}"
              f" n={row['n_runs']}")
    return 1 if failed and not any(r.status == "ok" for r in table.records) else 0


def _read_runs_csv(path: Path) -> list[bench.RunRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for raw in csv.DictReader(fh):
            records.append(
                bench.RunRecord(
                    problem=raw["problem"],
                    algorithm=raw["algorithm"],
                    run_index=int(raw["run_index"]),
                    seed=int(raw["seed"]),
                    status=raw["status"],
                    igd=float(raw["igd"]) if raw["igd"] else float("nan"),
                    igdx=float(raw["igdx"]) if raw["igdx"] else float("nan"),
                    mode_ratio=float(raw["mode_ratio"]) if raw["mode_ratio"] else float("nan"),
                    evals=int(raw["evals"]),
                    generations=int(raw["generations"]),
                    error=raw.get("error", ""),
                )
            )
    return records


def _cmd_compare(args) -> int:
    table = bench.ResultTable()
    for path in args.runs_csv:
        table.records.extend(_read_runs_csv(path))
    if not table.records:
        print("no run records found", file=sys.stderr)
        return 1
    rows = bench.compare_significance(table, alpha_base=args.alpha, n_tests=args.tests)
    if not args.no_fixtures:
        fixtures = bench.load_fixture_rows(args.fixtures)
        rows = bench.export_fixture_comparison(rows, fixtures)
    args.out.mkdir(parents=True, exist_ok=True)
    out_csv = args.out / "comparison.csv"
    fields = ["problem", "algorithm", "metric", "mean", "sd", "limit",
              "n_runs", "source", "best", "alpha"]
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {out_csv}")
    if not args.no_figures:
        from .plots import plot_summary_bars

        plot_summary_bars(rows, args.out / "comparison.png")
        print(f"wrote {args.out / 'comparison.png'}")
    return 0


def _cmd_limits(args) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    out_csv = args.out / "limits.csv"
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        fh.write("problem,n_approx,reference_size,igd_limit,igdx_limit,seconds\n")
        for name in args.problem:
            started = time.time()
            problem = get_problem(name, args.n)
            reference = cached_reference_set(problem, args.count, cache_dir=args.ref_cache)
            igd_limit, igdx_limit = achievable_limits(reference, args.na)
            elapsed = time.time() - started
            fh.write(f"{name},{args.na},{len(reference)},"
                     f"{igd_limit:.10g},{igdx_limit:.10g},{elapsed:.3f}\n")
            print(f"{name}: igd_limit={igd_limit:.4g} igdx_limit={igdx_limit:.4g} "
                  f"({elapsed:.1f}s)")
            if not args.no_figures:
                from .plots import plot_limits

                obj_idx = greedy_scattered_indices(reference.F, args.na)
                dec_idx = greedy_scattered_indices(reference.X, args.na)
                plot_limits(
                    reference, reference.F[obj_idx], reference.X[dec_idx],
                    args.out / f"limits__{name}.png",
                    f"{name}: achievable limits at N_A={args.na}",
                )
    print(f"wrote {out_csv}")
    return 0


def _cmd_cluster_snapshot(args) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    problem = get_problem(args.problem, args.n)
    clusters, stats, evals = bench.clustering_snapshot(
        args.problem, args.samples, args.seed, args.n
    )
    stem = f"clusters__{args.problem}__N{args.samples}__seed{args.seed}"
    out_csv = args.out / f"{stem}.csv"
    bench.write_snapshot_csv(out_csv, clusters, problem.n, problem.m)
    sizes = sorted((len(c) for c in clusters), reverse=True)
    print(f"{args.problem}: {len(clusters)} clusters from {args.samples} samples "
          f"(+{evals - args.samples} probe evals, mean N_t {stats.mean_test_points:.2f})")
    print(f"largest clusters: {sizes[:10]}")
    print(f"wrote {out_csv}")
    if not args.no_figures and problem.n == 2:
        from .plots import plot_cluster_snapshot

        reference = problem.reference_set(2000)
        plot_cluster_snapshot(
            clusters, args.out / f"{stem}.png",
            f"{args.problem}: hill-valley clustering of {args.samples} samples",
            reference=reference,
        )
        print(f"wrote {args.out / (stem + '.png')}")
    return 0


def _cmd_reference_set(args) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    for name in args.problem:
        problem = get_problem(name, args.n)
        reference = problem.reference_set(args.count)
        out_csv = args.out / f"reference__{name}__c{args.count}.csv"
        reference.to_csv(out_csv)
        print(f"{name}: {len(reference)} solutions, {reference.mode_count} modes "
              f"-> {out_csv}")
        if not args.no_figures and problem.n == 2:
            from .plots import plot_reference_set

            plot_reference_set(
                reference, args.out / f"reference__{name}__c{args.count}.png",
                f"{name} reference Pareto set",
            )
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {
        "run": _cmd_run,
        "compare": _cmd_compare,
        "limits": _cmd_limits,
        "cluster-snapshot": _cmd_cluster_snapshot,
        "reference-set": _cmd_reference_set,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
