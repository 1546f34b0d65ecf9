"""Server-side aggregation strategies and client selection.

Three strategies are provided: plain dataset-size-weighted averaging
(fedavg), loss-reweighted averaging that trades accuracy for uniformity
(qfedavg), and a personalization track that trains a per-client model pulled
toward the global one (ditto). Ditto's global track aggregates exactly like
fedavg; only its personal models differ.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ProtocolError
from .numkit import (
    DEFAULT_BATCH_SIZE,
    LabeledBatch,
    ModelParams,
    RngStream,
    average_params,
    run_sgd,
)

log = logging.getLogger(__name__)

STRATEGY_KINDS = ("fedavg", "qfedavg", "ditto")

# losses are clamped here before exponentiation in the qfedavg step
LOSS_FLOOR = 1e-12


@dataclass(frozen=True)
class StrategyConfig:
    """Aggregation strategy plus its hyperparameters.

    Fields irrelevant to the chosen kind are ignored at run time but always
    validated. lam is the personalization pull strength (the objective's
    quadratic coefficient), eta_l the personalization learning rate.
    """

    kind: str
    q: float = 0.2
    eta_q: float = 0.1
    lam: float = 0.8
    eta_l: float = 0.01
    personal_epochs: int = 10

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ConfigurationError(f"unknown strategy kind {self.kind!r}")
        if self.q < 0:
            raise ConfigurationError("q must be >= 0")
        if self.eta_q <= 0:
            raise ConfigurationError("eta_q must be > 0")
        if self.lam < 0:
            raise ConfigurationError("lambda must be >= 0")
        if self.eta_l <= 0:
            raise ConfigurationError("eta_l must be > 0")
        if self.personal_epochs < 0:
            raise ConfigurationError("personal_epochs must be >= 0")


@dataclass(frozen=True)
class ClientUpdate:
    """What one client hands back to the server at the end of a round."""

    client_id: int
    params: ModelParams
    train_size: int
    # loss of the distributed global model on the client's train split,
    # measured before any local training (the qfedavg weight needs it)
    local_loss_before: float

    def __post_init__(self):
        if self.train_size <= 0:
            raise ConfigurationError(f"client {self.client_id}: train_size must be > 0")


def select_clients(population: Sequence[int], count: int, rng: RngStream) -> list[int]:
    """Uniform random subset without replacement, returned sorted."""
    pop = list(population)
    if count > len(pop):
        raise ConfigurationError(
            f"cannot select {count} clients from a population of {len(pop)}"
        )
    gen = rng.generator()
    chosen = gen.choice(len(pop), size=count, replace=False)
    return sorted(pop[i] for i in chosen)


def _check_compatible(reference: ModelParams, updates: Sequence[ClientUpdate]) -> None:
    for u in updates:
        if not reference.compatible_with(u.params):
            raise ProtocolError(
                f"client {u.client_id} submitted params of incompatible shape or kind"
            )


def aggregate_fedavg(updates: Sequence[ClientUpdate]) -> ModelParams:
    """Dataset-size-weighted average of the submitted parameters."""
    if not updates:
        raise ConfigurationError("no updates to aggregate")
    _check_compatible(updates[0].params, updates)
    return average_params([u.params for u in updates],
                          [float(u.train_size) for u in updates])


def aggregate_qfedavg(global_params: ModelParams, updates: Sequence[ClientUpdate],
                      cfg: StrategyConfig) -> ModelParams:
    """Loss-reweighted server step.

    With L = 1/eta_q and per-client pre-training loss F_n:
        delta_n = L * (theta_k - theta_n)
        weight_n = F_n^q * delta_n
        h_n = q * F_n^(q-1) * ||delta_n||^2 + L * F_n^q
        theta_next = theta_k - sum(weight_n) / sum(h_n)
    At q = 0 this collapses to the unweighted average of the theta_n. If every
    client reports zero loss while q > 0 the reweighting is meaningless, so
    the round falls back to the fedavg step (logged).
    """
    if not updates:
        raise ConfigurationError("no updates to aggregate")
    _check_compatible(global_params, updates)
    losses = np.array([u.local_loss_before for u in updates], dtype=np.float64)
    if np.any(losses < 0):
        raise ConfigurationError("local_loss_before must be >= 0")
    if cfg.q > 0 and np.all(losses == 0.0):
        log.warning("qfedavg: all client losses are zero, falling back to fedavg")
        return aggregate_fedavg(updates)
    f = np.maximum(losses, LOSS_FLOOR)
    big_l = 1.0 / cfg.eta_q
    weight_sum = np.zeros_like(global_params.values)
    h_sum = 0.0
    for fi, u in zip(f, updates):
        delta = big_l * (global_params.values - u.params.values)
        weight_sum += (fi ** cfg.q) * delta
        h_sum += cfg.q * (fi ** (cfg.q - 1.0)) * float(delta @ delta) \
            + big_l * (fi ** cfg.q)
    return global_params.with_values(global_params.values - weight_sum / h_sum)


def ditto_personalize(global_params: ModelParams, personal: ModelParams,
                      data: LabeledBatch, cfg: StrategyConfig, rng: RngStream,
                      batch_size: int = DEFAULT_BATCH_SIZE) -> ModelParams:
    """Update a client's personal model toward its own data, pulled to global.

    Runs personal_epochs of SGD at rate eta_l on
    loss(v) + (lam / 2) * ||v - global||^2, starting from the current
    personal model. The global parameters are never touched.
    """
    if cfg.personal_epochs < 1:
        raise ConfigurationError("ditto personalization needs personal_epochs >= 1")
    if not global_params.compatible_with(personal):
        raise ProtocolError("personal and global params have incompatible shape or kind")
    return run_sgd(personal, data, cfg.personal_epochs, cfg.eta_l, rng, batch_size,
                   anchor=global_params, anchor_weight=cfg.lam)
