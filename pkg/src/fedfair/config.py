"""Experiment configuration: schema, validation, TOML/JSON loading.

Config files mirror the ExperimentConfig field names exactly; unknown keys
anywhere in the document are rejected rather than ignored, so typos fail
loudly. Validation collects every violation it can find instead of stopping
at the first, which is what the CLI's validate command prints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import tomli

from .datakit import ColumnSpec, CsvSchema, PartitionSpec, SensitiveAttributeSpec
from .errors import ConfigurationError
from .fairness import EQODDS_MODES, FairnessWeights
from .numkit import DEFAULT_BATCH_SIZE, MODEL_KINDS
from .shapley import WEIGHTINGS
from .strategies import StrategyConfig

DEFAULT_FAIRNESS_THRESHOLD = 0.8


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the generated classification task."""

    n_samples: int
    n_classes: int = 2
    n_features: int = 8
    class_skew: tuple[float, ...] | None = None  # None means uniform
    class_sep: float = 3.0
    cluster_std: float = 1.0
    label_noise: float = 0.0
    neutral_features: int = 0

    def skew(self) -> tuple[float, ...]:
        if self.class_skew is not None:
            return tuple(self.class_skew)
        return tuple([1.0 / self.n_classes] * self.n_classes)


@dataclass(frozen=True)
class CsvSpec:
    path: str
    schema: CsvSchema


@dataclass(frozen=True)
class ExperimentConfig:
    strategy: StrategyConfig
    dataset: SyntheticSpec | CsvSpec
    partition: PartitionSpec
    attributes: tuple[SensitiveAttributeSpec, ...]
    total_clients: int
    clients_per_round: int
    rounds: int
    local_epochs: int
    local_lr: float
    batch_size: int = DEFAULT_BATCH_SIZE
    seeds: tuple[int, ...] = (0,)
    fairness_weights: FairnessWeights = field(default_factory=FairnessWeights)
    shapley_weighting: str = "flat"
    eqodds_mode: str = "bounded"
    model_kind: str = "logistic"
    summary_window: tuple[int, int] | None = None
    fairness_threshold: float = DEFAULT_FAIRNESS_THRESHOLD
    name: str = "experiment"

    def __post_init__(self):
        problems = self.check()
        if problems:
            raise ConfigurationError("; ".join(problems))

    def check(self) -> list[str]:
        problems = []
        if self.total_clients < 2:
            problems.append("total_clients must be >= 2")
        if self.clients_per_round < 1:
            problems.append("clients_per_round must be >= 1")
        if self.clients_per_round > self.total_clients:
            problems.append(
                f"clients_per_round ({self.clients_per_round}) exceeds "
                f"total_clients ({self.total_clients})"
            )
        if self.rounds < 1:
            problems.append("rounds must be >= 1")
        if self.local_epochs < 1:
            problems.append("local_epochs must be >= 1")
        if self.local_lr <= 0:
            problems.append("local_lr must be > 0")
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        if not self.seeds:
            problems.append("at least one seed is required")
        if self.shapley_weighting not in WEIGHTINGS:
            problems.append(f"shapley_weighting must be one of {WEIGHTINGS}")
        if self.eqodds_mode not in EQODDS_MODES:
            problems.append(f"eqodds_mode must be one of {EQODDS_MODES}")
        if self.model_kind not in MODEL_KINDS:
            problems.append(f"model_kind must be one of {MODEL_KINDS}")
        if self.partition.clients != self.total_clients:
            problems.append("partition.clients must equal total_clients")
        if self.strategy.kind == "ditto" and self.strategy.personal_epochs < 1:
            problems.append("ditto requires personal_epochs >= 1")
        lo, hi = self.window()
        if not (1 <= lo <= hi <= self.rounds):
            problems.append(
                f"summary_window ({lo}, {hi}) must satisfy 1 <= start <= end <= rounds"
            )
        if not 0 < self.fairness_threshold <= 1:
            problems.append("fairness_threshold must lie in (0, 1]")
        return problems

    def window(self) -> tuple[int, int]:
        """Inclusive round window used for convergence summaries."""
        if self.summary_window is not None:
            return self.summary_window
        return (max(1, self.rounds // 2), self.rounds)


# ---------------------------------------------------------------------------
# dict <-> config
# ---------------------------------------------------------------------------

def _reject_unknown(section: str, data: dict, allowed: Sequence[str],
                    problems: list[str]) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        problems.append(f"{section}: unknown keys {unknown}")


def _strategy_from(data: Any, problems: list[str]) -> StrategyConfig | None:
    if not isinstance(data, dict):
        problems.append("strategy: must be a table/object")
        return None
    allowed = ["kind", "q", "eta_q", "lambda", "eta_l", "personal_epochs"]
    _reject_unknown("strategy", data, allowed, problems)
    kwargs = {k: data[k] for k in ("kind", "q", "eta_q", "eta_l", "personal_epochs")
              if k in data}
    if "lambda" in data:
        kwargs["lam"] = data["lambda"]
    try:
        return StrategyConfig(**kwargs)
    except (ConfigurationError, TypeError) as exc:
        problems.append(f"strategy: {exc}")
        return None


def _dataset_from(data: Any, problems: list[str]) -> SyntheticSpec | CsvSpec | None:
    if not isinstance(data, dict):
        problems.append("dataset: must be a table/object")
        return None
    kind = data.get("kind")
    if kind == "synthetic":
        allowed = ["kind", "n_samples", "n_classes", "n_features", "class_skew",
                   "class_sep", "cluster_std", "label_noise", "neutral_features"]
        _reject_unknown("dataset", data, allowed, problems)
        try:
            kwargs = {k: v for k, v in data.items() if k != "kind"}
            if "class_skew" in kwargs and kwargs["class_skew"] is not None:
                kwargs["class_skew"] = tuple(kwargs["class_skew"])
            return SyntheticSpec(**kwargs)
        except (ConfigurationError, TypeError) as exc:
            problems.append(f"dataset: {exc}")
            return None
    if kind == "csv":
        allowed = ["kind", "path", "columns"]
        _reject_unknown("dataset", data, allowed, problems)
        if "path" not in data or "columns" not in data:
            problems.append("dataset: csv kind requires 'path' and 'columns'")
            return None
        cols = []
        for i, c in enumerate(data["columns"]):
            if not isinstance(c, dict):
                problems.append(f"dataset.columns[{i}]: must be a table/object")
                return None
            _reject_unknown(f"dataset.columns[{i}]", c,
                            ["name", "role", "categories"], problems)
            try:
                cats = tuple(c["categories"]) if c.get("categories") else None
                cols.append(ColumnSpec(name=c["name"], role=c["role"], categories=cats))
            except (ConfigurationError, KeyError, TypeError) as exc:
                problems.append(f"dataset.columns[{i}]: {exc}")
                return None
        try:
            return CsvSpec(path=str(data["path"]), schema=CsvSchema(tuple(cols)))
        except ConfigurationError as exc:
            problems.append(f"dataset: {exc}")
            return None
    problems.append("dataset: kind must be 'synthetic' or 'csv'")
    return None


def _partition_from(data: Any, total_clients: int | None,
                    problems: list[str]) -> PartitionSpec | None:
    if not isinstance(data, dict):
        problems.append("partition: must be a table/object")
        return None
    allowed = ["mode", "alpha", "train_fraction", "auxiliary_fraction"]
    _reject_unknown("partition", data, allowed, problems)
    if total_clients is None:
        return None
    try:
        return PartitionSpec(clients=total_clients, **data)
    except (ConfigurationError, TypeError) as exc:
        problems.append(f"partition: {exc}")
        return None


def _attributes_from(data: Any, problems: list[str]) -> tuple[SensitiveAttributeSpec, ...]:
    if data is None:
        return ()
    if not isinstance(data, list):
        problems.append("attributes: must be an array of tables")
        return ()
    specs = []
    for i, a in enumerate(data):
        if not isinstance(a, dict):
            problems.append(f"attributes[{i}]: must be a table/object")
            continue
        _reject_unknown(f"attributes[{i}]", a, ["attribute_id", "name", "rule"], problems)
        try:
            specs.append(SensitiveAttributeSpec(
                attribute_id=int(a.get("attribute_id", i)),
                name=str(a.get("name", f"attr{i}")),
                rule=str(a["rule"]),
            ))
        except (ConfigurationError, KeyError) as exc:
            problems.append(f"attributes[{i}]: {exc}")
    return tuple(specs)


def _weights_from(data: Any, problems: list[str]) -> FairnessWeights:
    if data is None:
        return FairnessWeights()
    if not isinstance(data, dict):
        problems.append("fairness_weights: must be a table/object")
        return FairnessWeights()
    _reject_unknown("fairness_weights", data, ["w_j", "w_g", "w_r", "w_o"], problems)
    try:
        return FairnessWeights(**data)
    except (ConfigurationError, TypeError) as exc:
        problems.append(f"fairness_weights: {exc} (the four weights must sum to 1)")
        return FairnessWeights()


TOP_LEVEL_KEYS = [
    "name", "strategy", "dataset", "partition", "attributes", "total_clients",
    "clients_per_round", "rounds", "local_epochs", "local_lr", "batch_size",
    "seeds", "fairness_weights", "shapley_weighting", "eqodds_mode",
    "model_kind", "summary_window", "fairness_threshold",
]

REQUIRED_KEYS = ["strategy", "dataset", "partition", "total_clients",
                 "clients_per_round", "rounds", "local_epochs", "local_lr"]


def config_problems(data: Any) -> tuple[ExperimentConfig | None, list[str]]:
    """Build a config from a parsed document, collecting every violation."""
    problems: list[str] = []
    if not isinstance(data, dict):
        return None, ["top level: must be a table/object"]
    _reject_unknown("top level", data, TOP_LEVEL_KEYS, problems)
    for key in REQUIRED_KEYS:
        if key not in data:
            problems.append(f"top level: missing required key '{key}'")
    if problems and any(k not in data for k in REQUIRED_KEYS):
        return None, problems

    strategy = _strategy_from(data["strategy"], problems)
    dataset = _dataset_from(data["dataset"], problems)
    total_clients = data.get("total_clients")
    partition_spec = _partition_from(data["partition"], total_clients, problems)
    attributes = _attributes_from(data.get("attributes"), problems)
    weights = _weights_from(data.get("fairness_weights"), problems)

    window = data.get("summary_window")
    if window is not None:
        if (not isinstance(window, (list, tuple)) or len(window) != 2
                or not all(isinstance(v, int) for v in window)):
            problems.append("summary_window: must be a pair of integers [start, end]")
            window = None
        else:
            window = (window[0], window[1])

    seeds = data.get("seeds", [0])
    if not isinstance(seeds, (list, tuple)) or not all(isinstance(s, int) for s in seeds):
        problems.append("seeds: must be an array of integers")
        seeds = [0]

    if strategy is None or dataset is None or partition_spec is None:
        return None, problems

    try:
        cfg = ExperimentConfig(
            strategy=strategy,
            dataset=dataset,
            partition=partition_spec,
            attributes=attributes,
            total_clients=int(total_clients),
            clients_per_round=int(data["clients_per_round"]),
            rounds=int(data["rounds"]),
            local_epochs=int(data["local_epochs"]),
            local_lr=float(data["local_lr"]),
            batch_size=int(data.get("batch_size", DEFAULT_BATCH_SIZE)),
            seeds=tuple(seeds),
            fairness_weights=weights,
            shapley_weighting=str(data.get("shapley_weighting", "flat")),
            eqodds_mode=str(data.get("eqodds_mode", "bounded")),
            model_kind=str(data.get("model_kind", "logistic")),
            summary_window=window,
            fairness_threshold=float(data.get("fairness_threshold",
                                              DEFAULT_FAIRNESS_THRESHOLD)),
            name=str(data.get("name", "experiment")),
        )
    except (ConfigurationError, TypeError, ValueError) as exc:
        problems.append(str(exc))
        return None, problems
    return (cfg, problems) if not problems else (None, problems)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Inverse of config_problems for persisting the config inside results."""
    strategy = {
        "kind": cfg.strategy.kind, "q": cfg.strategy.q, "eta_q": cfg.strategy.eta_q,
        "lambda": cfg.strategy.lam, "eta_l": cfg.strategy.eta_l,
        "personal_epochs": cfg.strategy.personal_epochs,
    }
    if isinstance(cfg.dataset, SyntheticSpec):
        d = cfg.dataset
        dataset = {
            "kind": "synthetic", "n_samples": d.n_samples, "n_classes": d.n_classes,
            "n_features": d.n_features, "class_sep": d.class_sep,
            "cluster_std": d.cluster_std, "label_noise": d.label_noise,
            "neutral_features": d.neutral_features,
        }
        if d.class_skew is not None:
            dataset["class_skew"] = list(d.class_skew)
    else:
        dataset = {
            "kind": "csv", "path": cfg.dataset.path,
            "columns": [
                {"name": c.name, "role": c.role,
                 **({"categories": list(c.categories)} if c.categories else {})}
                for c in cfg.dataset.schema.columns
            ],
        }
    return {
        "name": cfg.name,
        "strategy": strategy,
        "dataset": dataset,
        "partition": {
            "mode": cfg.partition.mode, "alpha": cfg.partition.alpha,
            "train_fraction": cfg.partition.train_fraction,
            "auxiliary_fraction": cfg.partition.auxiliary_fraction,
        },
        "attributes": [
            {"attribute_id": a.attribute_id, "name": a.name, "rule": a.rule}
            for a in cfg.attributes
        ],
        "total_clients": cfg.total_clients,
        "clients_per_round": cfg.clients_per_round,
        "rounds": cfg.rounds,
        "local_epochs": cfg.local_epochs,
        "local_lr": cfg.local_lr,
        "batch_size": cfg.batch_size,
        "seeds": list(cfg.seeds),
        "fairness_weights": {
            "w_j": cfg.fairness_weights.w_j, "w_g": cfg.fairness_weights.w_g,
            "w_r": cfg.fairness_weights.w_r, "w_o": cfg.fairness_weights.w_o,
        },
        "shapley_weighting": cfg.shapley_weighting,
        "eqodds_mode": cfg.eqodds_mode,
        "model_kind": cfg.model_kind,
        "summary_window": list(cfg.window()),
        "fairness_threshold": cfg.fairness_threshold,
    }


def parse_config_text(text: str, fmt: str) -> Any:
    """Parse raw TOML or JSON; syntax errors surface with their location."""
    if fmt == "toml":
        return tomli.loads(text)
    return json.loads(text)


def load_config(path: str | Path) -> ExperimentConfig:
    """Load and fully validate a config file (.toml or .json)."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"no such config file: {path}")
    fmt = "toml" if path.suffix.lower() == ".toml" else "json"
    try:
        data = parse_config_text(path.read_text(encoding="utf-8"), fmt)
    except (tomli.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"{path}: parse error: {exc}") from exc
    cfg, problems = config_problems(data)
    if cfg is None:
        raise ConfigurationError(f"{path}: " + "; ".join(problems))
    return cfg
