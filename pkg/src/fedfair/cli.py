"""Command-line interface.

Subcommands: validate, run, summarize, export, presets. Exit codes are part
of the contract:

  0  success
  1  invalid configuration or constraint violation
  2  config parse failure (syntax), location included in the message
  3  filesystem problem (missing path, permissions, refusing to overwrite)
  4  results schema version mismatch
  5  runtime failure during a run (partial output files are removed)

FEDFAIR_THREADS caps per-round client-work parallelism (default 1).
"""

from __future__ import annotations

import argparse
import glob as globmod
import json
import sys
from pathlib import Path

import tomli

from .config import config_problems, config_to_dict, load_config, parse_config_text
from .engine import NOTIONS, aggregate_runs, run_single
from .errors import ConfigurationError, FedFairError, SchemaMismatchError
from .presets import preset_dict, preset_names
from .results import (
    export_csv,
    read_document,
    summarize_per_round_csv,
    summarize_run_document,
    write_aggregate,
    write_run,
)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_PARSE = 2
EXIT_IO = 3
EXIT_SCHEMA = 4
EXIT_RUNTIME = 5


def _parse_document(path: Path):
    fmt = "toml" if path.suffix.lower() == ".toml" else "json"
    return parse_config_text(path.read_text(encoding="utf-8"), fmt)


def cmd_validate(args) -> int:
    path = Path(args.config)
    if not path.exists():
        print(f"error: no such file: {path}", file=sys.stderr)
        return EXIT_IO
    try:
        data = _parse_document(path)
    except (tomli.TOMLDecodeError, json.JSONDecodeError) as exc:
        print(f"parse error in {path}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    cfg, problems = config_problems(data)
    if cfg is None:
        print(f"{path}: invalid configuration ({len(problems)} problem(s)):")
        for p in problems:
            print(f"  - {p}")
        return EXIT_INVALID
    print(f"{path}: OK ({cfg.name}: {cfg.strategy.kind}, "
          f"{cfg.total_clients} clients, {cfg.rounds} rounds)")
    return EXIT_OK


def _select_seeds(cfg, args) -> list[int]:
    if args.seeds:
        return [int(s) for s in args.seeds.split(",")]
    if args.repeats:
        base = cfg.seeds[0]
        return [base + i for i in range(args.repeats)]
    return list(cfg.seeds)


def _print_summary_table(rows: list[dict]) -> None:
    metrics = list(NOTIONS)
    header = f"{'source':<40}" + "".join(f"{m:>10}" for m in metrics)
    print(header)
    print("-" * len(header))
    for row in rows:
        cells = []
        for m in metrics:
            v = row["means"].get(m)
            cells.append(f"{v:>10.4f}" if v is not None else f"{'n/a':>10}")
        print(f"{row['source']:<40}" + "".join(cells))
        verdicts = row.get("verdicts", {})
        marks = "  ".join(f"{m}:{verdicts.get(m, '?')}" for m in metrics)
        print(f"{'':<40}{marks}")


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigurationError as exc:
        msg = str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_PARSE if "parse error" in msg else EXIT_INVALID
    seeds = _select_seeds(cfg, args)
    out_dir = Path(args.out)
    run_paths = {seed: out_dir / "runs" / f"seed{seed}.json" for seed in seeds}
    aggregate_path = out_dir / "aggregate.json"
    if not args.force:
        existing = [p for p in [*run_paths.values(), aggregate_path] if p.exists()]
        if existing:
            print("error: refusing to overwrite existing results "
                  f"(use --force): {existing[0]}", file=sys.stderr)
            return EXIT_IO
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        print(f"error: cannot write to {out_dir}: {exc}", file=sys.stderr)
        return EXIT_IO

    written: list[Path] = []
    try:
        runs = []
        for seed in seeds:
            result = run_single(cfg, seed, timing=args.timing)
            write_run(result, run_paths[seed])
            written.append(run_paths[seed])
            runs.append(result)
        aggregate = aggregate_runs(runs)
        write_aggregate(aggregate, config_to_dict(cfg), aggregate_path)
        written.append(aggregate_path)
    except FedFairError as exc:
        for p in written:
            p.unlink(missing_ok=True)
        print(f"error: run failed, partial files removed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    rows = [{
        "source": f"{cfg.name} (aggregate of {len(seeds)} seed(s))",
        "means": {m: aggregate["summary"][m]["mean"] for m in NOTIONS},
        "verdicts": aggregate["verdicts"],
    }]
    _print_summary_table(rows)
    print(f"\nwrote {len(seeds)} run file(s) under {out_dir / 'runs'} "
          f"and {aggregate_path}")
    return EXIT_OK


def _expand(patterns: list[str]) -> list[Path]:
    paths: list[Path] = []
    for pattern in patterns:
        paths.extend(Path(p) for p in sorted(globmod.glob(pattern)))
    return paths


def cmd_summarize(args) -> int:
    paths = _expand(args.results)
    if not paths:
        print("error: no files match", file=sys.stderr)
        return EXIT_IO
    rows: list[dict] = []
    try:
        for path in paths:
            if path.suffix == ".csv":
                rows.extend(summarize_per_round_csv(path))
                continue
            doc = read_document(path)
            if "rounds" in doc:
                rows.append(summarize_run_document(doc))
            else:
                rows.append({
                    "source": doc.get("name", str(path)) + " (aggregate)",
                    "means": {m: doc["summary"][m]["mean"] for m in NOTIONS},
                    "verdicts": doc.get("verdicts", {}),
                })
    except SchemaMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except FedFairError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    _print_summary_table(rows)
    return EXIT_OK


def cmd_export(args) -> int:
    paths = _expand(args.results)
    if not paths:
        print("error: no files match", file=sys.stderr)
        return EXIT_IO
    docs = []
    try:
        for path in paths:
            doc = read_document(path)
            if "rounds" in doc:  # aggregates carry no per-round client data
                docs.append((path.stem, doc))
    except SchemaMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    if not docs:
        print("error: no run documents among the matches", file=sys.stderr)
        return EXIT_INVALID
    per_round, per_client = export_csv(docs, Path(args.out))
    print(f"wrote {per_round} and {per_client}")
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.name:
        try:
            print(json.dumps(preset_dict(args.name), indent=2))
        except ConfigurationError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
    else:
        for name in preset_names():
            print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedfair",
        description="Deterministic federated-learning simulator with "
                    "per-round fairness analytics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a config file, list every violation")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run an experiment, one results file per seed")
    p.add_argument("config")
    p.add_argument("--out", default="results")
    p.add_argument("--seeds", default=None, help="comma-separated seed override")
    p.add_argument("--repeats", type=int, default=None,
                   help="run N seeds derived from the config's first seed")
    p.add_argument("--force", action="store_true",
                   help="overwrite existing results files")
    p.add_argument("--timing", action="store_true",
                   help="record wall-clock per round (results stop being "
                        "byte-reproducible)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("summarize", help="summary-window means for results files")
    p.add_argument("results", nargs="+",
                   help="globs of run/aggregate JSON or exported per_round.csv")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("export", help="flatten run files into CSV tables")
    p.add_argument("results", nargs="+")
    p.add_argument("--format", choices=["csv"], default="csv")
    p.add_argument("--out", default="export")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("presets", help="list shipped presets or print one")
    p.add_argument("name", nargs="?", default=None)
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
