"""Input handling: run documents, aggregate documents, exported CSV.

This package never recomputes a metric. Everything plotted is read verbatim
from the simulator's files, so charts cannot disagree with the source data.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

from . import SUPPORTED_RESULTS_SCHEMA

NOTIONS = ("f_j", "f_g", "f_r", "f_o", "F_T")


class ReportError(Exception):
    pass


@dataclass(frozen=True)
class RunSeries:
    """Per-round notion values of one run; None marks an undefined round."""

    label: str
    rounds: list[int]
    series: dict[str, list[float | None]]


@dataclass(frozen=True)
class AggregateStats:
    """Summary-window statistics of one experiment."""

    label: str
    # notion -> (mean or None, std or None, defined_runs)
    summary: dict[str, tuple[float | None, float | None, int]]
    threshold: float


def _check_schema(doc: dict, path: Path) -> None:
    version = doc.get("meta", {}).get("versions", {}).get("results_schema")
    if version != SUPPORTED_RESULTS_SCHEMA:
        raise ReportError(
            f"{path}: results schema {version!r} not supported "
            f"(expected {SUPPORTED_RESULTS_SCHEMA!r})"
        )


def load_run(path: str | Path) -> RunSeries:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    _check_schema(doc, path)
    if "rounds" not in doc:
        raise ReportError(f"{path}: not a run document (no rounds)")
    label = f"{doc['config'].get('name', path.stem)}/seed{doc['meta']['seed']}"
    rounds = [r["k"] for r in doc["rounds"]]
    series = {n: [r["fairness"][n] for r in doc["rounds"]] for n in NOTIONS}
    return RunSeries(label=label, rounds=rounds, series=series)


def load_aggregate(path: str | Path) -> AggregateStats:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    _check_schema(doc, path)
    if "summary" not in doc or "rounds" in doc:
        raise ReportError(f"{path}: not an aggregate document")
    summary = {}
    for notion in NOTIONS:
        cell = doc["summary"][notion]
        summary[notion] = (cell["mean"], cell["std"], cell["defined_runs"])
    return AggregateStats(label=doc.get("name", path.stem), summary=summary,
                          threshold=float(doc.get("fairness_threshold", 0.8)))


def load_runs_csv(path: str | Path) -> list[RunSeries]:
    """Exported per_round.csv: one RunSeries per run label."""
    path = Path(path)
    runs: dict[str, dict[int, dict[str, float | None]]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["round"] == "" or row["metric"] not in NOTIONS:
                continue
            k = int(row["round"])
            value = float(row["value"]) if row["value"] != "" else None
            runs.setdefault(row["run"], {}).setdefault(k, {})[row["metric"]] = value
    out = []
    for label in sorted(runs):
        ks = sorted(runs[label])
        series = {n: [runs[label][k].get(n) for k in ks] for n in NOTIONS}
        out.append(RunSeries(label=label, rounds=ks, series=series))
    return out


def classify_inputs(paths: list[Path]) -> tuple[list[RunSeries], list[AggregateStats]]:
    """Sort input files into run series and aggregates by their content."""
    runs: list[RunSeries] = []
    aggregates: list[AggregateStats] = []
    for path in paths:
        if path.suffix == ".csv":
            runs.extend(load_runs_csv(path))
            continue
        doc = json.loads(path.read_text(encoding="utf-8"))
        _check_schema(doc, path)
        if "rounds" in doc:
            runs.append(load_run(path))
        else:
            aggregates.append(load_aggregate(path))
    return runs, aggregates
