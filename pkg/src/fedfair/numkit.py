"""Dense numeric kernel: model parameters, RNG streams, small classifiers and SGD.

Two fixed architectures are supported, a softmax (multinomial logistic)
classifier and a one-hidden-layer MLP with 32 ReLU units. Parameters for
either live in a single flat float64 vector so that client/server exchange,
averaging and Shapley subset averaging are plain vector arithmetic.

Layout of the flat vector: for each layer of shape (rows, cols), rows*cols
weight entries (row-major) followed by cols bias entries.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError

HIDDEN_UNITS = 32
DEFAULT_BATCH_SIZE = 32

MODEL_KINDS = ("logistic", "mlp")


# ---------------------------------------------------------------------------
# RNG streams
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RngStream:
    """An addressable, order-independent source of pseudo-randomness.

    Identical (seed, stream_id) pairs always yield identical draw sequences,
    no matter which thread or in which order they are consumed. Streams for
    distinct ids are statistically independent (numpy SeedSequence spawning).
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.default_rng(ss)


def derive_stream(seed: int, *parts: object) -> RngStream:
    """Derive a stream id from structured parts (stage name, round, client, ...).

    Parts are hashed, not packed, so callers never have to reason about
    field widths. Bytes parts participate directly, ints and strings are
    encoded; the result is stable across processes and platforms.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, bytes):
            h.update(b"b")
            h.update(part)
        elif isinstance(part, int):
            h.update(b"i")
            h.update(struct.pack(">q", part))
        else:
            h.update(b"s")
            h.update(str(part).encode("utf-8"))
        h.update(b"\x00")
    stream_id = int.from_bytes(h.digest(), "big") & (2**63 - 1)
    return RngStream(seed=seed, stream_id=stream_id)


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LabeledBatch:
    """A block of samples: normalized features, class labels, attribute flags.

    features: (n, d) float64, every value in [0, 1].
    labels: (n,) integer class ids.
    attribute_flags: (n, m) {0,1} membership per sensitive attribute.
    """

    features: np.ndarray
    labels: np.ndarray
    attribute_flags: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        a = np.asarray(self.attribute_flags, dtype=np.int64)
        if f.ndim != 2:
            raise ConfigurationError("features must be a 2-D matrix")
        if y.shape != (f.shape[0],):
            raise ConfigurationError("labels length must match feature rows")
        if a.ndim != 2 or a.shape[0] != f.shape[0]:
            raise ConfigurationError("attribute_flags must have one row per sample")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "attribute_flags", a)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_attributes(self) -> int:
        return self.attribute_flags.shape[1]

    def subset(self, idx: np.ndarray) -> "LabeledBatch":
        return LabeledBatch(self.features[idx], self.labels[idx], self.attribute_flags[idx])

    def fingerprint(self) -> bytes:
        """Stable content hash, used to key per-shard RNG streams."""
        h = hashlib.blake2b(digest_size=16)
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        h.update(np.ascontiguousarray(self.attribute_flags).tobytes())
        return h.digest()


def concat_batches(batches: Sequence[LabeledBatch]) -> LabeledBatch:
    return LabeledBatch(
        np.concatenate([b.features for b in batches]),
        np.concatenate([b.labels for b in batches]),
        np.concatenate([b.attribute_flags for b in batches]),
    )


# ---------------------------------------------------------------------------
# Model parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """Flat parameter vector plus the layer shapes needed to interpret it."""

    values: np.ndarray
    shapes: tuple[tuple[int, int], ...]
    model_kind: str

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ConfigurationError(f"unknown model kind {self.model_kind!r}")
        v = np.asarray(self.values, dtype=np.float64)
        shapes = tuple((int(r), int(c)) for r, c in self.shapes)
        expected = sum(r * c + c for r, c in shapes)
        if v.shape != (expected,):
            raise ConfigurationError(
                f"parameter vector has {v.shape} entries, shapes imply {expected}"
            )
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "shapes", shapes)

    @property
    def n_inputs(self) -> int:
        return self.shapes[0][0]

    @property
    def n_classes(self) -> int:
        return self.shapes[-1][1]

    def compatible_with(self, other: "ModelParams") -> bool:
        return self.model_kind == other.model_kind and self.shapes == other.shapes

    def with_values(self, values: np.ndarray) -> "ModelParams":
        return ModelParams(values=values, shapes=self.shapes, model_kind=self.model_kind)

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Unpack into [(W, b), ...] views of the flat vector."""
        out = []
        offset = 0
        for rows, cols in self.shapes:
            w = self.values[offset:offset + rows * cols].reshape(rows, cols)
            offset += rows * cols
            b = self.values[offset:offset + cols]
            offset += cols
            out.append((w, b))
        return out


def init_params(model_kind: str, n_features: int, n_classes: int, rng: RngStream,
                hidden: int = HIDDEN_UNITS) -> ModelParams:
    """Initial parameters.

    The logistic model starts at zero (its loss is convex, and a zero start
    injects no spurious feature preferences). The MLP needs symmetry
    breaking, so its weights draw W ~ N(0, 1/sqrt(fan_in)); biases are zero.
    """
    if model_kind == "logistic":
        shapes = ((n_features, n_classes),)
        return ModelParams(np.zeros(n_features * n_classes + n_classes),
                           shapes, model_kind)
    if model_kind != "mlp":
        raise ConfigurationError(f"unknown model kind {model_kind!r}")
    shapes = ((n_features, hidden), (hidden, n_classes))
    gen = rng.generator()
    chunks = []
    for rows, cols in shapes:
        chunks.append(gen.normal(0.0, 1.0 / np.sqrt(rows), size=rows * cols))
        chunks.append(np.zeros(cols))
    return ModelParams(np.concatenate(chunks), shapes, model_kind)


def average_params(params: Sequence[ModelParams],
                   weights: Sequence[float] | None = None) -> ModelParams:
    """Convex combination of compatible parameter vectors.

    Computed in anchored form p0 + sum(w_i * (p_i - p0)) so that averaging N
    identical vectors returns the input bit-exactly.
    """
    if not params:
        raise ConfigurationError("cannot average an empty parameter list")
    base = params[0]
    for p in params[1:]:
        if not base.compatible_with(p):
            raise ConfigurationError("cannot combine params of differing shape or kind")
    if weights is None:
        w = np.full(len(params), 1.0 / len(params))
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(params),) or np.any(w < 0):
            raise ConfigurationError("weights must be non-negative, one per model")
        total = w.sum()
        if total <= 0:
            raise ConfigurationError("weights must not all be zero")
        w = w / total
    acc = np.zeros_like(base.values)
    for wi, p in zip(w[1:], params[1:]):
        acc += wi * (p.values - base.values)
    return base.with_values(base.values + acc)


# ---------------------------------------------------------------------------
# Forward pass, loss, gradient
# ---------------------------------------------------------------------------

def _check_shapes(params: ModelParams, data: LabeledBatch) -> None:
    if len(data) == 0:
        raise ConfigurationError("batch is empty")
    if data.n_features != params.n_inputs:
        raise ConfigurationError(
            f"model expects {params.n_inputs} features, batch has {data.n_features}"
        )
    if int(data.labels.max(initial=0)) >= params.n_classes:
        raise ConfigurationError("label id outside model's class range")


def _logits(params: ModelParams, x: np.ndarray) -> np.ndarray:
    layers = params.layers()
    if params.model_kind == "logistic":
        (w, b), = layers
        return x @ w + b
    (w1, b1), (w2, b2) = layers
    h = np.maximum(x @ w1 + b1, 0.0)
    return h @ w2 + b2


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def predict(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Argmax class ids; ties resolve to the lowest class index."""
    return np.argmax(_logits(params, np.asarray(features, dtype=np.float64)), axis=1)


def mean_loss(params: ModelParams, data: LabeledBatch) -> float:
    """Mean softmax cross-entropy of the batch."""
    _check_shapes(params, data)
    logp = _log_softmax(_logits(params, data.features))
    return float(-logp[np.arange(len(data)), data.labels].mean())


def gradient(params: ModelParams, data: LabeledBatch) -> np.ndarray:
    """Analytic gradient of the mean cross-entropy loss, flat like params.values."""
    _check_shapes(params, data)
    x, y = data.features, data.labels
    n = len(data)
    if params.model_kind == "logistic":
        (w, b), = params.layers()
        p = np.exp(_log_softmax(x @ w + b))
        p[np.arange(n), y] -= 1.0
        p /= n
        return np.concatenate([(x.T @ p).ravel(), p.sum(axis=0)])
    (w1, b1), (w2, b2) = params.layers()
    h_pre = x @ w1 + b1
    h = np.maximum(h_pre, 0.0)
    p = np.exp(_log_softmax(h @ w2 + b2))
    p[np.arange(n), y] -= 1.0
    p /= n
    d_h = (p @ w2.T) * (h_pre > 0.0)
    return np.concatenate([
        (x.T @ d_h).ravel(), d_h.sum(axis=0),
        (h.T @ p).ravel(), p.sum(axis=0),
    ])


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def run_sgd(params: ModelParams, data: LabeledBatch, epochs: int, lr: float,
         rng: RngStream, batch_size: int,
         anchor: ModelParams | None = None, anchor_weight: float = 0.0) -> ModelParams:
    """Mini-batch SGD; optional proximal pull toward an anchor vector.

    With anchor_weight > 0 each step descends loss + (anchor_weight/2) *
    ||v - anchor||^2, which is the personalization objective. The anchor
    branch is skipped entirely at weight 0 so the plain path is bit-identical
    to never having offered the option.
    """
    gen = rng.generator()
    v = params.values.copy()
    work = params.with_values(v)
    n = len(data)
    for _ in range(epochs):
        order = gen.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            g = gradient(work, data.subset(idx))
            if anchor is not None and anchor_weight != 0.0:
                g = g + anchor_weight * (v - anchor.values)
            v = v - lr * g
            work = params.with_values(v)
    return work


def train_local(params: ModelParams, data: LabeledBatch, epochs: int, lr: float,
                rng: RngStream, batch_size: int = DEFAULT_BATCH_SIZE) -> ModelParams:
    """E full passes of mini-batch SGD over the batch; input params untouched.

    The final partial batch of each epoch is kept. Deterministic given rng.
    """
    if epochs < 1:
        raise ConfigurationError("epochs must be >= 1")
    if lr < 0:
        raise ConfigurationError("learning rate must be >= 0")
    _check_shapes(params, data)
    return run_sgd(params, data, epochs, lr, rng, batch_size)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GroupCounts:
    """Binary confusion counts for one group of one sensitive attribute."""

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.fp + self.tn


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    loss: float
    # attribute id -> {group flag (0 or 1) -> GroupCounts}
    confusion: dict[int, dict[int, GroupCounts]] = field(default_factory=dict)


def evaluate(params: ModelParams, data: LabeledBatch, positive_class: int = 1) -> EvalReport:
    """Accuracy, mean cross-entropy, and per-attribute binary confusion counts.

    Confusion counts reduce the task to positive-class-vs-rest: Y = 1 iff the
    true label equals positive_class, Yhat = 1 iff the predicted class does.
    Counts are tallied separately for samples with (a=1) and without (a=0)
    each sensitive attribute.
    """
    _check_shapes(params, data)
    logp = _log_softmax(_logits(params, data.features))
    pred = np.argmax(logp, axis=1)
    accuracy = float((pred == data.labels).mean())
    loss = float(-logp[np.arange(len(data)), data.labels].mean())

    y = data.labels == positive_class
    yhat = pred == positive_class
    confusion: dict[int, dict[int, GroupCounts]] = {}
    for attr in range(data.n_attributes):
        flags = data.attribute_flags[:, attr]
        per_group = {}
        for g in (0, 1):
            m = flags == g
            per_group[g] = GroupCounts(
                tp=int(np.sum(m & yhat & y)),
                fp=int(np.sum(m & yhat & ~y)),
                tn=int(np.sum(m & ~yhat & ~y)),
                fn=int(np.sum(m & ~yhat & y)),
            )
        confusion[attr] = per_group
    return EvalReport(accuracy=accuracy, loss=loss, confusion=confusion)
