"""The three chart families: notion time series, summary error bars, trade-off.

Rendering is pinned for byte-reproducibility: fixed backend, fixed hash salt
for SVG ids, no date metadata. Undefined values render as gaps or omitted
bars with a footnote; nothing is interpolated or imputed.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "fedfair-report"

import matplotlib.pyplot as plt

from .loader import NOTIONS, AggregateStats, ReportError, RunSeries

IMAGE_FORMATS = ("png", "svg")


def _save(fig, out_path: Path, image_format: str) -> Path:
    if image_format not in IMAGE_FORMATS:
        raise ReportError(f"unsupported image format {image_format!r}")
    out_path = out_path.with_suffix(f".{image_format}")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    metadata = {"Date": None} if image_format == "svg" else {}
    fig.savefig(out_path, format=image_format, metadata=metadata)
    plt.close(fig)
    return out_path


def plot_timeseries(runs: Sequence[RunSeries], out_path: Path,
                    image_format: str = "png") -> Path:
    """One panel per notion, every run overlaid, undefined rounds left as gaps."""
    runs = list(runs)
    if not runs:
        raise ReportError("timeseries needs at least one run document")
    if all(len(r.rounds) < 2 for r in runs):
        raise ReportError("timeseries needs a run with at least two rounds")
    fig, axes = plt.subplots(1, len(NOTIONS), figsize=(4 * len(NOTIONS), 3.2),
                             sharey=True)
    for ax, notion in zip(axes, NOTIONS):
        for run in runs:
            ys = [math.nan if v is None else v for v in run.series[notion]]
            ax.plot(run.rounds, ys, marker="o", markersize=2.5, linewidth=1.0,
                    label=run.label)
        ax.set_title(notion)
        ax.set_xlabel("round")
        ax.set_ylim(0.0, 1.05)
        ax.grid(True, alpha=0.3)
    axes[0].set_ylabel("fairness")
    axes[0].legend(loc="lower right", fontsize=7)
    fig.tight_layout()
    return _save(fig, out_path, image_format)


def plot_errorbars(aggregates: Sequence[AggregateStats], out_path: Path,
                   image_format: str = "png") -> Path:
    """Grouped bars per experiment and notion, one-deviation whiskers.

    Bars for notions undefined in every seed are omitted and listed in a
    footnote; aggregates built from a single run draw without whiskers.
    """
    aggregates = list(aggregates)
    if not aggregates:
        raise ReportError("errorbars needs at least one aggregate document")
    fig, ax = plt.subplots(figsize=(1.8 + 1.6 * len(NOTIONS), 4.0))
    width = 0.8 / len(aggregates)
    omitted: list[str] = []
    for i, agg in enumerate(aggregates):
        xs, heights, errs = [], [], []
        for j, notion in enumerate(NOTIONS):
            mean, std, defined_runs = agg.summary[notion]
            if mean is None:
                omitted.append(f"{agg.label}:{notion}")
                continue
            xs.append(j + (i - (len(aggregates) - 1) / 2) * width)
            heights.append(mean)
            errs.append(std if defined_runs >= 2 and std is not None else math.nan)
        yerr = None if all(math.isnan(e) for e in errs) else \
            [0.0 if math.isnan(e) else e for e in errs]
        ax.bar(xs, heights, width=width * 0.92, yerr=yerr, capsize=3,
               label=agg.label)
    threshold = aggregates[0].threshold
    ax.axhline(threshold, linestyle="--", linewidth=1.0, color="black",
               label=f"threshold {threshold}")
    ax.set_xticks(range(len(NOTIONS)))
    ax.set_xticklabels(NOTIONS)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("summary-window mean")
    ax.legend(fontsize=7)
    if omitted:
        fig.text(0.01, 0.01, "omitted (undefined in all runs): " + ", ".join(omitted),
                 fontsize=6)
    fig.tight_layout(rect=(0, 0.04, 1, 1) if omitted else None)
    return _save(fig, out_path, image_format)


def pareto_front(points: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    """Non-dominated subset when maximizing both coordinates.

    Exact duplicates collapse to a single vertex; incomparable points all
    stay. Returned sorted by the first coordinate.
    """
    unique = sorted(set(points))
    front = []
    for p in unique:
        dominated = any(
            q != p and q[0] >= p[0] and q[1] >= p[1] for q in unique
        )
        if not dominated:
            front.append(p)
    return front


def plot_tradeoff(aggregates: Sequence[AggregateStats], out_path: Path,
                  image_format: str = "png") -> Path:
    """Combined fairness against performance (orchestrator notion), one marker
    per experiment, with the non-dominated frontier dashed."""
    aggregates = list(aggregates)
    if len(aggregates) < 2:
        raise ReportError("tradeoff needs at least two aggregate documents")
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    points = []
    for agg in aggregates:
        x = agg.summary["f_o"][0]
        y = agg.summary["F_T"][0]
        if x is None or y is None:
            continue
        points.append((x, y))
        ax.scatter([x], [y], s=36)
        ax.annotate(agg.label, (x, y), fontsize=7,
                    textcoords="offset points", xytext=(4, 4))
    if len(points) >= 2:
        front = pareto_front(points)
        fx = [p[0] for p in front]
        fy = [p[1] for p in front]
        ax.plot(fx, fy, linestyle="--", linewidth=1.0, color="black",
                label="best trade-offs")
        ax.legend(fontsize=7)
    ax.set_xlabel("performance (f_o)")
    ax.set_ylabel("general fairness (F_T)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return _save(fig, out_path, image_format)
