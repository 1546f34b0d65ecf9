#!/usr/bin/env python3
"""Run the strategy x partition grid at silo scale and print a comparison table.

Writes one results directory per condition under --out (default results/grid)
and ends with a summary-window table of every condition, the same numbers
`fedfair summarize` would print.
"""

import argparse
from pathlib import Path

from fedfair.config import config_to_dict
from fedfair.engine import NOTIONS, run_experiment
from fedfair.presets import preset_config
from fedfair.results import write_aggregate, write_run

CONDITIONS = [f"{s}-{m}-silo" for s in ("fedavg", "qfedavg", "ditto")
              for m in ("iid", "dirichlet")]


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results/grid")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--rounds", type=int, default=30)
    args = ap.parse_args()
    seeds = [int(s) for s in args.seeds.split(",")]

    rows = []
    for name in CONDITIONS:
        cfg = preset_config(name, seeds=seeds, rounds=args.rounds)
        runs, aggregate = run_experiment(cfg)
        out_dir = Path(args.out) / name
        for run in runs:
            write_run(run, out_dir / "runs" / f"seed{run.seed}.json")
        write_aggregate(aggregate, config_to_dict(cfg), out_dir / "aggregate.json")
        rows.append((name, aggregate["summary"]))
        print(f"finished {name}")

    header = f"{'condition':<24}" + "".join(f"{m:>9}" for m in NOTIONS)
    print("\n" + header)
    print("-" * len(header))
    for name, summary in rows:
        cells = "".join(
            f"{summary[m]['mean']:>9.3f}" if summary[m]["mean"] is not None
            else f"{'n/a':>9}" for m in NOTIONS)
        print(f"{name:<24}{cells}")


if __name__ == "__main__":
    main()
