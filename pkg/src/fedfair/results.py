"""Results persistence: canonical JSON documents, CSV export, summaries.

One JSON document per run, one aggregate document per experiment. Documents
are written canonically (sorted keys, fixed separators) so the same run
produces byte-identical files. Undefined metrics are serialized as null with
a sibling "<name>_reason" string, never silently dropped.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Sequence

from . import RESULTS_SCHEMA_VERSION, __version__
from .config import config_to_dict
from .engine import NOTIONS, RunResult, threshold_check
from .errors import ConfigurationError, SchemaMismatchError
from .fairness import EqOddsRecord

PER_ROUND_METRICS = list(NOTIONS) + ["aux_accuracy"]


# ---------------------------------------------------------------------------
# JSON documents
# ---------------------------------------------------------------------------

def _eqodds_doc(rec: EqOddsRecord) -> dict:
    return {
        "per_attribute": {str(a): v for a, v in sorted(rec.per_attribute.items())},
        "skipped": [[a, reason] for a, reason in rec.skipped_attributes],
    }


def _with_reasons(values: dict[str, float | None], reasons: dict[str, str]) -> dict:
    doc: dict[str, Any] = {}
    for name, value in values.items():
        doc[name] = value
        if value is None:
            doc[f"{name}_reason"] = reasons.get(name, "undefined")
    return doc


def run_document(result: RunResult) -> dict:
    """The persistable form of one run."""
    rounds = []
    for r in result.rounds:
        snap = r.fairness
        fairness = _with_reasons(
            {n: snap.value(n) for n in NOTIONS}, snap.reasons)
        fairness["gains_G"] = {str(n): g for n, g in sorted(snap.gains_G.items())}
        fairness["gains_R"] = {str(n): g for n, g in sorted(snap.gains_R.items())}
        fairness["excluded_clients"] = [[n, reason] for n, reason in snap.excluded_clients]
        fairness["clamped_negative"] = snap.clamped_negative
        rounds.append({
            "k": r.round,
            "selected": list(r.selected),
            "fairness": fairness,
            "clients": [
                {
                    "client_id": c.client_id,
                    "round": c.round,
                    "performance": c.performance,
                    "reward": c.reward,
                    "train_size": c.train_size,
                    "test_size": c.test_size,
                    "eqodds": _eqodds_doc(c.eqodds),
                    "pre_eqodds": _eqodds_doc(c.pre_eqodds),
                }
                for c in r.clients
            ],
            "shapley": {"per_round": {str(n): s for n, s in sorted(r.shapley.items())}},
            "aux_accuracy": r.aux_accuracy,
        })
    summary = _with_reasons(dict(result.summary), {})
    return {
        "config": config_to_dict(result.config),
        "rounds": rounds,
        "cumulative_shapley": {
            str(n): s for n, s in sorted(result.ledger.cumulative.items())
        },
        "summary": summary,
        "meta": {
            "seed": result.seed,
            "versions": {"results_schema": RESULTS_SCHEMA_VERSION,
                         "fedfair": __version__},
            "wall_clock": result.wall_clock,
        },
    }


def canonical_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def write_run(result: RunResult, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(run_document(result)), encoding="utf-8")


def write_aggregate(aggregate: dict, config_doc: dict, path: Path) -> None:
    doc = {
        "config": config_doc,
        **aggregate,
        "meta": {"versions": {"results_schema": RESULTS_SCHEMA_VERSION,
                              "fedfair": __version__}},
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(doc), encoding="utf-8")


def read_document(path: str | Path) -> dict:
    """Read any results document, enforcing the schema version."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"no such results file: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    version = doc.get("meta", {}).get("versions", {}).get("results_schema")
    if version != RESULTS_SCHEMA_VERSION:
        raise SchemaMismatchError(
            f"{path}: results schema {version!r}, this build reads "
            f"{RESULTS_SCHEMA_VERSION!r}"
        )
    return doc


# ---------------------------------------------------------------------------
# Summaries (shared by results JSON and exported CSV)
# ---------------------------------------------------------------------------

def _summarize_series(series: dict[str, list[tuple[int, float | None]]],
                      window: tuple[int, int]) -> dict[str, float | None]:
    lo, hi = window
    out: dict[str, float | None] = {}
    for metric, points in series.items():
        vals = [v for k, v in sorted(points) if lo <= k <= hi and v is not None]
        out[metric] = sum(vals) / len(vals) if vals else None
    return out


def summarize_run_document(doc: dict) -> dict:
    """Recompute the summary-window means of one run from its per-round data."""
    window = tuple(doc["config"]["summary_window"])
    series: dict[str, list[tuple[int, float | None]]] = {m: [] for m in PER_ROUND_METRICS}
    for r in doc["rounds"]:
        for notion in NOTIONS:
            series[notion].append((r["k"], r["fairness"][notion]))
        series["aux_accuracy"].append((r["k"], r["aux_accuracy"]))
    means = _summarize_series(series, window)
    return {
        "source": doc["config"].get("name", "run") + f"/seed{doc['meta']['seed']}",
        "window": list(window),
        "means": means,
        "verdicts": threshold_check(means, doc["config"]["fairness_threshold"]),
    }


def summarize_per_round_csv(path: str | Path) -> list[dict]:
    """Recompute summaries from an exported per-round CSV (one per run label)."""
    rows = list(csv.DictReader(open(path, newline="", encoding="utf-8")))
    runs: dict[str, dict] = {}
    for row in rows:
        run = row["run"]
        entry = runs.setdefault(run, {"series": {m: [] for m in PER_ROUND_METRICS},
                                      "config": {}})
        metric = row["metric"]
        if metric.startswith("config:"):
            entry["config"][metric.removeprefix("config:")] = row["value"]
            continue
        if metric not in entry["series"]:
            continue
        value = float(row["value"]) if row["value"] != "" else None
        entry["series"][metric].append((int(row["round"]), value))
    out = []
    for run in sorted(runs):
        entry = runs[run]
        window = (int(entry["config"]["summary_window_start"]),
                  int(entry["config"]["summary_window_end"]))
        threshold = float(entry["config"]["fairness_threshold"])
        means = _summarize_series(entry["series"], window)
        out.append({
            "source": run,
            "window": list(window),
            "means": means,
            "verdicts": threshold_check(means, threshold),
        })
    return out


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def export_csv(run_docs: Sequence[tuple[str, dict]], out_dir: Path) -> tuple[Path, Path]:
    """Write long-format per-round and per-client tables for the given runs.

    run_docs pairs a run label with its parsed results document. Per-round
    rows are (run, round, metric, value, reason); a handful of config rows
    (round left empty, metric prefixed "config:") carry the summary window
    and threshold so summaries can be recomputed from the CSV alone.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    per_round_path = out_dir / "per_round.csv"
    per_client_path = out_dir / "per_client.csv"

    with per_round_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "round", "metric", "value", "reason"])
        for label, doc in run_docs:
            cfg = doc["config"]
            w.writerow([label, "", "config:summary_window_start",
                        cfg["summary_window"][0], ""])
            w.writerow([label, "", "config:summary_window_end",
                        cfg["summary_window"][1], ""])
            w.writerow([label, "", "config:fairness_threshold",
                        cfg["fairness_threshold"], ""])
            for r in doc["rounds"]:
                for notion in NOTIONS:
                    value = r["fairness"][notion]
                    reason = r["fairness"].get(f"{notion}_reason", "")
                    w.writerow([label, r["k"], notion, _fmt(value), reason])
                w.writerow([label, r["k"], "aux_accuracy", _fmt(r["aux_accuracy"]), ""])

    with per_client_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "round", "client", "performance", "reward",
                    "shapley_round", "shapley_cumulative", "mean_eqodds", "reason"])
        for label, doc in run_docs:
            cumulative: dict[str, float] = {}
            for r in doc["rounds"]:
                per_round = r["shapley"]["per_round"]
                for n, s in per_round.items():
                    cumulative[n] = cumulative.get(n, 0.0) + s
                for c in r["clients"]:
                    n = str(c["client_id"])
                    scores = c["eqodds"]["per_attribute"]
                    if scores:
                        mean_eq, reason = sum(scores.values()) / len(scores), ""
                    else:
                        mean_eq, reason = None, "no-computable-attributes"
                    w.writerow([
                        label, r["k"], c["client_id"],
                        _fmt(c["performance"]), _fmt(c["reward"]),
                        _fmt(per_round.get(n, 0.0)), _fmt(cumulative.get(n, 0.0)),
                        _fmt(mean_eq), reason,
                    ])
    return per_round_path, per_client_path
