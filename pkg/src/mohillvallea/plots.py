"""Figure rendering for benchmark artifacts.

Every CLI report path renders PNG figures next to its delimited output.
The delimited files remain the canonical record; figures are a
convenience view of the same data.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .optimizer import TraceRow

_DPI = 160


def plot_cluster_snapshot(
    clusters, path: Path, title: str, reference=None
) -> None:
    """Decision-space scatter of a clustering, one color per cluster.

    Hill-valley probe points are drawn as crosses; the reference Pareto
    set, when given, is overlaid in black.
    """
    fig, ax = plt.subplots(figsize=(6.5, 6))
    cmap = plt.get_cmap("tab20")
    for cluster in clusters:
        X = np.stack([s.x for s in cluster.members])
        probe = np.array([s.origin == "hv_test" for s in cluster.members])
        color = cmap(cluster.id % 20)
        ax.scatter(X[~probe, 0], X[~probe, 1], s=4, color=color, linewidths=0)
        if probe.any():
            ax.scatter(
                X[probe, 0], X[probe, 1], s=8, color=color, marker="x", linewidths=0.6
            )
    if reference is not None:
        ax.scatter(reference.X[:, 0], reference.X[:, 1], s=1, color="black", zorder=3)
    ax.set_xlabel("x0")
    ax.set_ylabel("x1")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_convergence(
    traces: dict[int, list[TraceRow]], path: Path, problem: str, algorithm: str
) -> None:
    """Median and min/max band of IGD, IGDX, and mode ratio over evaluations."""
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
    labels = ("IGD", "IGDX", "mode ratio")
    for ax, attr, label in zip(axes, ("igd", "igdx", "mode_ratio"), labels):
        grid, bands = _band_over_traces(traces, attr)
        if grid is not None:
            lo, med, hi = bands
            ax.fill_between(grid, lo, hi, alpha=0.25, linewidth=0)
            ax.plot(grid, med)
            ax.set_xscale("log")
            if attr != "mode_ratio" and np.all(med[np.isfinite(med)] > 0):
                ax.set_yscale("log")
        ax.set_xlabel("evaluations")
        ax.set_ylabel(label)
    fig.suptitle(f"{problem} / {algorithm}")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def _band_over_traces(traces: dict[int, list[TraceRow]], attr: str):
    """Step-interpolate each trace onto a common eval grid; min/median/max."""
    series = []
    for rows in traces.values():
        pts = [(r.evals, getattr(r, attr)) for r in rows if not math.isnan(getattr(r, attr))]
        if pts:
            series.append(np.array(pts))
    if not series:
        return None, None
    hi = min(s[-1, 0] for s in series)
    lo = min(s[0, 0] for s in series)
    if hi <= lo:
        grid = np.array([lo])
    else:
        grid = np.unique(np.geomspace(max(lo, 1), hi, 64).astype(int))
    matrix = np.empty((len(series), len(grid)))
    for i, s in enumerate(series):
        idx = np.searchsorted(s[:, 0], grid, side="right") - 1
        idx = np.clip(idx, 0, len(s) - 1)
        matrix[i] = s[idx, 1]
    return grid, (matrix.min(axis=0), np.median(matrix, axis=0), matrix.max(axis=0))


def plot_reference_set(reference, path: Path, title: str) -> None:
    """Reference Pareto set: decision space colored by mode, plus the front."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.2))
    cmap = plt.get_cmap("tab10")
    for mode in range(reference.mode_count):
        sel = reference.modes == mode
        axes[0].scatter(
            reference.X[sel, 0], reference.X[sel, 1],
            s=2, color=cmap(mode % 10), linewidths=0, label=f"mode {mode}",
        )
    axes[0].set_xlabel("x0")
    axes[0].set_ylabel("x1")
    axes[0].set_title("Pareto set (decision space)")
    if reference.mode_count <= 10:
        axes[0].legend(markerscale=4, fontsize=7)
    axes[1].scatter(reference.F[:, 0], reference.F[:, 1], s=2, color="black", linewidths=0)
    axes[1].set_xlabel("f0")
    axes[1].set_ylabel("f1")
    axes[1].set_title("Pareto front (objective space)")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_limits(reference, obj_subset: np.ndarray, dec_subset: np.ndarray, path: Path, title: str) -> None:
    """Reference set with the selected achievable-limit subsets overlaid."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.2))
    axes[0].scatter(reference.X[:, 0], reference.X[:, 1], s=1, color="0.75", linewidths=0)
    axes[0].scatter(dec_subset[:, 0], dec_subset[:, 1], s=10, color="crimson", linewidths=0)
    axes[0].set_title("decision-space subset (IGDX limit)")
    axes[0].set_xlabel("x0")
    axes[0].set_ylabel("x1")
    axes[1].scatter(reference.F[:, 0], reference.F[:, 1], s=1, color="0.75", linewidths=0)
    axes[1].scatter(obj_subset[:, 0], obj_subset[:, 1], s=10, color="crimson", linewidths=0)
    axes[1].set_title("objective-space subset (IGD limit)")
    axes[1].set_xlabel("f0")
    axes[1].set_ylabel("f1")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_summary_bars(summary_rows: list[dict], path: Path) -> None:
    """Grouped bar chart of mean IGD/IGDX per problem and algorithm."""
    problems = sorted({r["problem"] for r in summary_rows})
    algorithms = sorted({r["algorithm"] for r in summary_rows})
    metrics = ("igd", "igdx")
    fig, axes = plt.subplots(1, len(metrics), figsize=(6 * len(metrics), 4))
    axes = np.atleast_1d(axes)
    width = 0.8 / max(len(algorithms), 1)
    for ax, metric in zip(axes, metrics):
        for j, algo in enumerate(algorithms):
            means, sds = [], []
            for prob in problems:
                match = [
                    r for r in summary_rows
                    if r["problem"] == prob and r["algorithm"] == algo and r["metric"] == metric
                ]
                means.append(match[0]["mean"] if match else math.nan)
                sds.append(match[0]["sd"] if match else 0.0)
            pos = np.arange(len(problems)) + (j - len(algorithms) / 2 + 0.5) * width
            ax.bar(pos, means, width=width, yerr=sds, label=algo, capsize=2)
        ax.set_xticks(np.arange(len(problems)))
        ax.set_xticklabels(problems, rotation=30, ha="right", fontsize=8)
        ax.set_ylabel(metric.upper())
        ax.set_yscale("log")
    axes[-1].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
