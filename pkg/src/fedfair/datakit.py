"""Dataset construction: synthetic blobs, CSV ingestion, client partitioning.

All randomness flows through RngStream so a (data, spec, seed) triple always
produces the same partition. Partitioning conserves samples exactly: the
union of client shards plus the server's auxiliary pool is the input
multiset, with no duplication or loss.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .numkit import LabeledBatch, RngStream

PARTITION_MODES = ("iid", "dirichlet")
MIN_TEST_SAMPLES = 10
DIRICHLET_MAX_RETRIES = 1000

COLUMN_ROLES = ("continuous", "categorical", "label")


# ---------------------------------------------------------------------------
# Sensitive attributes
# ---------------------------------------------------------------------------

_LABEL_RULE = re.compile(r"^label\s*(==|!=)\s*(\d+)$")
_FEATURE_RULE = re.compile(r"^feature\[(\d+)\]\s*(>=|<=|>|<)\s*([0-9.eE+-]+)$")


@dataclass(frozen=True)
class SensitiveAttributeSpec:
    """A declarative, total membership rule for one protected group.

    Supported rule forms: "label==K", "label!=K", "feature[i]>t" (and >=, <,
    <=). Rules are evaluated against final (normalized) feature values.
    """

    attribute_id: int
    name: str
    rule: str

    def __post_init__(self):
        self._parse()  # fail fast on malformed rules

    def _parse(self):
        m = _LABEL_RULE.match(self.rule.strip())
        if m:
            return ("label", m.group(1), int(m.group(2)), None)
        m = _FEATURE_RULE.match(self.rule.strip())
        if m:
            return ("feature", m.group(2), float(m.group(3)), int(m.group(1)))
        raise ConfigurationError(
            f"attribute {self.name!r}: cannot parse rule {self.rule!r}"
        )

    def flags(self, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
        kind, op, value, feat_idx = self._parse()
        if kind == "label":
            hit = labels == value if op == "==" else labels != value
        else:
            if feat_idx >= features.shape[1]:
                raise ConfigurationError(
                    f"attribute {self.name!r}: feature index {feat_idx} out of range"
                )
            col = features[:, feat_idx]
            hit = {"<": col < value, "<=": col <= value,
                   ">": col > value, ">=": col >= value}[op]
        return hit.astype(np.int64)


def attribute_matrix(specs: Sequence[SensitiveAttributeSpec], features: np.ndarray,
                     labels: np.ndarray) -> np.ndarray:
    if not specs:
        return np.zeros((features.shape[0], 0), dtype=np.int64)
    ordered = sorted(specs, key=lambda s: s.attribute_id)
    ids = [s.attribute_id for s in ordered]
    if ids != list(range(len(ordered))):
        raise ConfigurationError("attribute ids must be 0..m-1 without gaps")
    return np.stack([s.flags(features, labels) for s in ordered], axis=1)


# ---------------------------------------------------------------------------
# Partition containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartitionSpec:
    mode: str
    clients: int
    alpha: float = 0.5
    train_fraction: float = 0.9
    auxiliary_fraction: float = 0.1

    def __post_init__(self):
        if self.mode not in PARTITION_MODES:
            raise ConfigurationError(f"unknown partition mode {self.mode!r}")
        if self.clients < 2:
            raise ConfigurationError("need at least 2 clients")
        if self.alpha <= 0:
            raise ConfigurationError("dirichlet alpha must be > 0")
        for name in ("train_fraction", "auxiliary_fraction"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigurationError(f"{name} must lie in (0, 1)")


@dataclass(frozen=True)
class ClientDataset:
    client_id: int
    train: LabeledBatch
    test: LabeledBatch

    def __post_init__(self):
        if len(self.test) == 0:
            raise ConfigurationError(
                f"client {self.client_id} has an empty test split"
            )


@dataclass(frozen=True)
class AuxiliaryDataset:
    """Server-held samples used only for contribution (Shapley) valuation."""

    data: LabeledBatch


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

def _scale_unit_interval(features: np.ndarray) -> np.ndarray:
    lo = features.min(axis=0)
    hi = features.max(axis=0)
    span = hi - lo
    scaled = np.where(span > 0, (features - lo) / np.where(span > 0, span, 1.0), 0.0)
    return scaled


def synth_classification(n_samples: int, n_classes: int, n_features: int,
                         class_skew: Sequence[float],
                         attr_specs: Sequence[SensitiveAttributeSpec],
                         rng: RngStream,
                         class_sep: float = 3.0, cluster_std: float = 1.0,
                         label_noise: float = 0.0,
                         neutral_features: int = 0) -> LabeledBatch:
    """Gaussian blobs with controllable class balance, scaled into [0, 1].

    class_sep is the target distance between class centers in cluster_std
    units; centers are redrawn (bounded retries) if a random draw lands two
    of them closer than 80% of that. label_noise reassigns that fraction of
    labels uniformly to a different class, which bounds achievable accuracy
    and slows convergence. The last neutral_features axes carry no class
    signal (all centers coincide there); pointing a sensitive-attribute rule
    at one of them yields groups independent of the label.
    """
    if n_classes < 2:
        raise ConfigurationError("need at least 2 classes")
    skew = np.asarray(class_skew, dtype=np.float64)
    if skew.shape != (n_classes,):
        raise ConfigurationError("class_skew must have one weight per class")
    if np.any(skew < 0):
        raise ConfigurationError("class_skew weights must be >= 0")
    if abs(skew.sum() - 1.0) > 1e-9:
        raise ConfigurationError("class_skew weights must sum to 1")
    if not 0.0 <= label_noise < 1.0:
        raise ConfigurationError("label_noise must lie in [0, 1)")
    if not 0 <= neutral_features < n_features:
        raise ConfigurationError("neutral_features must lie in [0, n_features)")

    gen = rng.generator()
    informative = n_features - neutral_features
    target = class_sep * cluster_std
    scale = target / np.sqrt(2.0 * informative)
    centers = None
    for _ in range(100):
        cand = gen.normal(0.0, scale, size=(n_classes, informative))
        dists = [np.linalg.norm(cand[i] - cand[j])
                 for i in range(n_classes) for j in range(i + 1, n_classes)]
        if min(dists) >= 0.8 * target:
            centers = cand
            break
        if centers is None:
            centers = cand
    if neutral_features:
        centers = np.hstack([centers, np.zeros((n_classes, neutral_features))])
    labels = gen.choice(n_classes, size=n_samples, p=skew)
    features = centers[labels] + gen.normal(0.0, cluster_std,
                                            size=(n_samples, n_features))
    if label_noise > 0:
        flip = gen.random(n_samples) < label_noise
        shift = gen.integers(1, n_classes, size=n_samples)
        labels = np.where(flip, (labels + shift) % n_classes, labels)
    features = _scale_unit_interval(features)
    flags = attribute_matrix(attr_specs, features, labels)
    return LabeledBatch(features, labels, flags)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnSpec:
    name: str
    role: str
    # known category values; None means "infer from the file". Unknown-category
    # rejects can only occur when categories are pinned here.
    categories: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.role not in COLUMN_ROLES:
            raise ConfigurationError(f"column {self.name!r}: unknown role {self.role!r}")


@dataclass(frozen=True)
class CsvSchema:
    columns: tuple[ColumnSpec, ...]

    def __post_init__(self):
        labels = [c for c in self.columns if c.role == "label"]
        if len(labels) != 1:
            raise ConfigurationError("schema must declare exactly one label column")

    @property
    def label_column(self) -> ColumnSpec:
        return next(c for c in self.columns if c.role == "label")


@dataclass(frozen=True)
class CsvLoadResult:
    batch: LabeledBatch
    feature_names: tuple[str, ...]
    class_names: tuple[str, ...]
    rejects: list[tuple[int, str]] = field(default_factory=list)


def load_csv(path: str | Path, schema: CsvSchema,
             attr_specs: Sequence[SensitiveAttributeSpec] = ()) -> CsvLoadResult:
    """Read a headered CSV into a normalized LabeledBatch.

    Categorical columns are one-hot encoded, continuous columns min-max
    normalized into [0, 1] (a constant column maps to 0.0 for every row),
    and the label column is mapped to dense class ids. Rows with a
    non-numeric continuous value or a category outside a pinned category
    list are skipped and reported, never silently dropped.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigurationError(f"{path}: empty file, header row required")
        rows = [row for row in reader if row]

    by_name = {c.name: c for c in schema.columns}
    if set(header) != set(by_name) or len(header) != len(schema.columns):
        raise ConfigurationError(
            f"{path}: header {header} does not match schema columns {sorted(by_name)}"
        )
    col_index = {name: header.index(name) for name in by_name}

    # first pass: infer category and label vocabularies where not pinned
    categories: dict[str, tuple[str, ...]] = {}
    for col in schema.columns:
        if col.role == "categorical":
            if col.categories is not None:
                categories[col.name] = col.categories
            else:
                seen = sorted({row[col_index[col.name]] for row in rows})
                categories[col.name] = tuple(seen)
    label_col = schema.label_column
    if label_col.categories is not None:
        class_names = label_col.categories
    else:
        class_names = tuple(sorted({row[col_index[label_col.name]] for row in rows}))
    class_id = {name: i for i, name in enumerate(class_names)}

    feature_names: list[str] = []
    for col in schema.columns:
        if col.role == "continuous":
            feature_names.append(col.name)
        elif col.role == "categorical":
            feature_names.extend(f"{col.name}={cat}" for cat in categories[col.name])

    kept_rows: list[list[float]] = []
    kept_labels: list[int] = []
    rejects: list[tuple[int, str]] = []
    for i, row in enumerate(rows):
        values: list[float] = []
        label = -1
        reason = None
        for col in schema.columns:
            raw = row[col_index[col.name]]
            if col.role == "continuous":
                try:
                    values.append(float(raw))
                except ValueError:
                    reason = f"non-numeric-continuous:{col.name}"
                    break
            elif col.role == "categorical":
                cats = categories[col.name]
                if raw not in cats:
                    reason = f"unknown-category:{col.name}"
                    break
                values.extend(1.0 if raw == cat else 0.0 for cat in cats)
            else:
                if raw not in class_id:
                    reason = f"unknown-label:{col.name}"
                    break
                label = class_id[raw]
        if reason is not None:
            rejects.append((i, reason))
            continue
        kept_rows.append(values)
        kept_labels.append(label)

    if not kept_rows:
        raise ConfigurationError(f"{path}: no usable rows after rejects")
    features = np.asarray(kept_rows, dtype=np.float64)
    labels = np.asarray(kept_labels, dtype=np.int64)

    # min-max normalize the continuous slots only; one-hot slots are already 0/1
    continuous_slots = [i for i, name in enumerate(feature_names) if "=" not in name]
    for slot in continuous_slots:
        col = features[:, slot]
        lo, hi = col.min(), col.max()
        features[:, slot] = (col - lo) / (hi - lo) if hi > lo else 0.0

    flags = attribute_matrix(attr_specs, features, labels)
    batch = LabeledBatch(features, labels, flags)
    return CsvLoadResult(batch=batch, feature_names=tuple(feature_names),
                         class_names=class_names, rejects=rejects)


# ---------------------------------------------------------------------------
# Partitioning
# ---------------------------------------------------------------------------

def _split_client(data: LabeledBatch, idx: np.ndarray, client_id: int,
                  train_fraction: float, gen: np.random.Generator) -> ClientDataset:
    order = gen.permutation(idx)
    n_train = int(len(order) * train_fraction)
    return ClientDataset(
        client_id=client_id,
        train=data.subset(np.sort(order[:n_train])),
        test=data.subset(np.sort(order[n_train:])),
    )


def _iid_assignment(class_pools: list[np.ndarray], n_clients: int) -> list[list[np.ndarray]]:
    """Stratified equal shards; per-class remainders rotate across clients."""
    shards: list[list[np.ndarray]] = [[] for _ in range(n_clients)]
    cursor = 0
    for pool in class_pools:
        base = len(pool) // n_clients
        extra = len(pool) - base * n_clients
        offset = 0
        for c in range(n_clients):
            take = base + (1 if (c - cursor) % n_clients < extra else 0)
            shards[c].append(pool[offset:offset + take])
            offset += take
        cursor = (cursor + extra) % n_clients
    return shards


def _dirichlet_assignment(class_pools: list[np.ndarray], n_clients: int, alpha: float,
                          min_client_samples: int,
                          gen: np.random.Generator) -> list[list[np.ndarray]]:
    """Per-class Dir(alpha) proportions over clients, redrawn while any client
    would end up below the minimum sample count."""
    last = None
    for _ in range(DIRICHLET_MAX_RETRIES):
        shards: list[list[np.ndarray]] = [[] for _ in range(n_clients)]
        for pool in class_pools:
            proportions = gen.dirichlet(np.full(n_clients, alpha))
            cuts = (np.cumsum(proportions) * len(pool)).astype(int)[:-1]
            for c, part in enumerate(np.split(pool, cuts)):
                shards[c].append(part)
        sizes = [sum(len(p) for p in parts) for parts in shards]
        last = shards
        if min(sizes) >= min_client_samples:
            return shards
    return last


def partition(data: LabeledBatch, spec: PartitionSpec,
              rng: RngStream) -> tuple[list[ClientDataset], AuxiliaryDataset]:
    """Carve an auxiliary server pool, then shard the rest across clients.

    iid mode gives every client an equal-size stratified shard (class counts
    match global proportions to within one sample per class). dirichlet mode
    draws each class's split across clients from Dir(alpha); smaller alpha
    concentrates classes on fewer clients. Every client's shard is then split
    into train and test by train_fraction.
    """
    gen = rng.generator()
    n = len(data)
    n_clients = spec.clients
    perm = gen.permutation(n)
    aux_count = int(round(n * spec.auxiliary_fraction))
    aux_idx = np.sort(perm[:aux_count])
    pool_idx = perm[aux_count:]

    labels = data.labels[pool_idx]
    class_pools = [pool_idx[labels == c] for c in np.unique(labels)]

    test_fraction = 1.0 - spec.train_fraction
    min_client = int(np.ceil(MIN_TEST_SAMPLES / test_fraction))
    if spec.mode == "iid":
        shards = _iid_assignment(class_pools, n_clients)
    else:
        shards = _dirichlet_assignment(class_pools, n_clients, spec.alpha,
                                       min_client, gen)

    clients: list[ClientDataset] = []
    for c in range(n_clients):
        idx = np.concatenate(shards[c]) if shards[c] else np.array([], dtype=int)
        n_test = len(idx) - int(len(idx) * spec.train_fraction)
        if n_test < MIN_TEST_SAMPLES:
            raise ConfigurationError(
                f"client {c} would receive only {n_test} test samples "
                f"(minimum {MIN_TEST_SAMPLES}); provide more data or fewer clients"
            )
        clients.append(_split_client(data, idx, c, spec.train_fraction, gen))
    return clients, AuxiliaryDataset(data=data.subset(aux_idx))
