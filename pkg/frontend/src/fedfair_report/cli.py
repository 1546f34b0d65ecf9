"""Command line: report --in GLOB --charts timeseries,errorbars,tradeoff --out DIR."""

from __future__ import annotations

import argparse
import glob as globmod
import sys
from pathlib import Path

from .charts import IMAGE_FORMATS, plot_errorbars, plot_timeseries, plot_tradeoff
from .loader import ReportError, classify_inputs

CHART_KINDS = ("timeseries", "errorbars", "tradeoff")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedfair-report",
        description="Render charts from fedfair results files. Reads run "
                    "and aggregate JSON (or exported per_round.csv) and never "
                    "recomputes a metric.")
    parser.add_argument("--in", dest="inputs", required=True, nargs="+",
                        help="globs of results files")
    parser.add_argument("--charts", default="timeseries,errorbars,tradeoff",
                        help="comma-separated subset of "
                             f"{','.join(CHART_KINDS)}")
    parser.add_argument("--out", default="report")
    parser.add_argument("--format", choices=list(IMAGE_FORMATS), default="png")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    charts = [c.strip() for c in args.charts.split(",") if c.strip()]
    unknown = [c for c in charts if c not in CHART_KINDS]
    if unknown or not charts:
        print(f"error: unknown chart kind(s) {unknown}", file=sys.stderr)
        return 2
    paths: list[Path] = []
    for pattern in args.inputs:
        paths.extend(Path(p) for p in sorted(globmod.glob(pattern)))
    if not paths:
        print("error: no input files match", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    try:
        runs, aggregates = classify_inputs(paths)
        written = []
        if "timeseries" in charts:
            written.append(plot_timeseries(runs, out_dir / "timeseries",
                                           args.format))
        if "errorbars" in charts:
            written.append(plot_errorbars(aggregates, out_dir / "errorbars",
                                          args.format))
        if "tradeoff" in charts:
            written.append(plot_tradeoff(aggregates, out_dir / "tradeoff",
                                         args.format))
    except ReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
