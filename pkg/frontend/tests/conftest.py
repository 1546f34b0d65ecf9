"""Golden inputs for the report tests, produced through the simulator's CLI.

The report package consumes the simulator only through its public files, so
the fixtures shell out to the installed `fedfair` command and work on the
JSON/CSV it writes.
"""

import json
import subprocess
import sys
from pathlib import Path

import pytest

BASE_CONFIG = {
    "name": "golden",
    "strategy": {"kind": "fedavg"},
    "dataset": {"kind": "synthetic", "n_samples": 3000, "n_classes": 2,
                "n_features": 5, "neutral_features": 1, "class_sep": 3.0,
                "label_noise": 0.1},
    "partition": {"mode": "iid", "alpha": 0.5, "train_fraction": 0.9,
                  "auxiliary_fraction": 0.1},
    "attributes": [{"attribute_id": 0, "name": "f4", "rule": "feature[4]>0.5"}],
    "total_clients": 10,
    "clients_per_round": 5,
    "rounds": 5,
    "local_epochs": 1,
    "local_lr": 0.4,
    "batch_size": 100000,
    "seeds": [7],
    "shapley_weighting": "classic",
}


def run_fedfair(*argv):
    proc = subprocess.run([sys.executable, "-m", "fedfair.cli", *map(str, argv)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr + proc.stdout
    return proc


@pytest.fixture(scope="session")
def golden_dir(tmp_path_factory) -> Path:
    """Two-seed run + aggregate, single-seed run, attribute-free run, CSV export."""
    root = tmp_path_factory.mktemp("golden")

    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(BASE_CONFIG), encoding="utf-8")
    run_fedfair("run", cfg, "--out", root / "multi", "--repeats", "2")

    single = dict(BASE_CONFIG, name="golden-single")
    cfg1 = root / "cfg1.json"
    cfg1.write_text(json.dumps(single), encoding="utf-8")
    run_fedfair("run", cfg1, "--out", root / "single")

    noattr = dict(BASE_CONFIG, name="golden-noattr", attributes=[])
    cfg2 = root / "cfg2.json"
    cfg2.write_text(json.dumps(noattr), encoding="utf-8")
    run_fedfair("run", cfg2, "--out", root / "noattr")

    run_fedfair("export", str(root / "multi" / "runs" / "*.json"),
                "--out", root / "export")
    return root
