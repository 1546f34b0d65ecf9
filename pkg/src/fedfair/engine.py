"""Round orchestrator: selection, reward capture, training, aggregation,
contribution accounting and fairness snapshots, repeated for K rounds.

Per-round client work (reward evaluation, local training, post-training
evaluation) is independent across clients and may run on a small thread pool
(FEDFAIR_THREADS); every reduction afterwards iterates clients in id order,
so results are identical for any thread count. All randomness is derived
from (seed, stage, round, shard) streams, never from execution order; in
particular a client's training stream is keyed by its shard's content, so
two clients holding identical data train identically, as symmetry demands.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import pstdev
from typing import Callable, Sequence

from .config import CsvSpec, ExperimentConfig, SyntheticSpec
from .datakit import AuxiliaryDataset, ClientDataset, load_csv, partition, synth_classification
from .errors import ConfigurationError, UndefinedMetricError
from .fairness import (
    EqOddsRecord,
    eq_odds_record,
    general_fairness,
    group_fairness,
    incentive_fairness,
    individual_fairness,
    orchestrator_fairness,
)
from .numkit import (
    ModelParams,
    derive_stream,
    evaluate,
    init_params,
    mean_loss,
    train_local,
)
from .shapley import ShapleyLedger, UtilityCache, accumulate, round_shapley
from .strategies import ClientUpdate, aggregate_fedavg, aggregate_qfedavg, ditto_personalize, select_clients

NOTIONS = ("f_j", "f_g", "f_r", "f_o", "F_T")

THREADS_ENV = "FEDFAIR_THREADS"


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ClientRoundRecord:
    """One selected client's observables for one round.

    reward is measured on the distributed global model strictly before local
    training; performance after it (for the personalization strategy, on the
    personal model, since that is what the client actually benefits from).
    """

    client_id: int
    round: int
    performance: float
    reward: float
    eqodds: EqOddsRecord
    pre_eqodds: EqOddsRecord
    train_size: int
    test_size: int


@dataclass(frozen=True)
class FairnessSnapshot:
    """The four notion values plus their combination for one round.

    A notion that cannot be computed is None with the reason recorded; the
    combined value is then None as well, never imputed.
    """

    round: int
    f_j: float | None
    f_g: float | None
    f_r: float | None
    f_o: float | None
    F_T: float | None
    reasons: dict[str, str] = field(default_factory=dict)
    gains_G: dict[int, float] = field(default_factory=dict)
    gains_R: dict[int, float] = field(default_factory=dict)
    excluded_clients: list[tuple[int, str]] = field(default_factory=list)
    clamped_negative: int = 0

    def value(self, notion: str) -> float | None:
        return getattr(self, notion)


@dataclass(frozen=True)
class RoundOutput:
    round: int
    selected: list[int]
    fairness: FairnessSnapshot
    clients: list[ClientRoundRecord]
    shapley: dict[int, float]
    aux_accuracy: float


@dataclass(frozen=True)
class RunResult:
    config: ExperimentConfig
    seed: int
    rounds: list[RoundOutput]
    ledger: ShapleyLedger
    summary: dict[str, float | None]
    wall_clock: list[float] | None = None

    def snapshot(self, k: int) -> FairnessSnapshot:
        return self.rounds[k - 1].fairness


# ---------------------------------------------------------------------------
# Data assembly
# ---------------------------------------------------------------------------

def build_data(cfg: ExperimentConfig, seed: int) -> tuple[list[ClientDataset], AuxiliaryDataset]:
    """Materialize and partition the experiment's dataset for one seed."""
    if isinstance(cfg.dataset, SyntheticSpec):
        d = cfg.dataset
        batch = synth_classification(
            d.n_samples, d.n_classes, d.n_features, d.skew(), cfg.attributes,
            derive_stream(seed, "data"),
            class_sep=d.class_sep, cluster_std=d.cluster_std,
            label_noise=d.label_noise, neutral_features=d.neutral_features,
        )
    elif isinstance(cfg.dataset, CsvSpec):
        batch = load_csv(cfg.dataset.path, cfg.dataset.schema, cfg.attributes).batch
    else:
        raise ConfigurationError("unknown dataset spec")
    return partition(batch, cfg.partition, derive_stream(seed, "partition"))


def _n_classes(clients: Sequence[ClientDataset], aux: AuxiliaryDataset) -> int:
    top = int(aux.data.labels.max(initial=0))
    for c in clients:
        top = max(top, int(c.train.labels.max(initial=0)),
                  int(c.test.labels.max(initial=0)))
    return top + 1


# ---------------------------------------------------------------------------
# One round
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _ClientWork:
    update: ClientUpdate
    record: ClientRoundRecord
    personal: ModelParams | None


def _client_round(n: int, data: ClientDataset, global_params: ModelParams,
                  cfg: ExperimentConfig, seed: int, k: int,
                  personal: ModelParams | None,
                  normalizer: Callable[[float], float]) -> _ClientWork:
    # reward first: the model as received, before any local work
    received = evaluate(global_params, data.test)
    pre_rec = eq_odds_record(n, received.confusion, cfg.eqodds_mode)
    loss_before = mean_loss(global_params, data.train)

    shard_key = data.train.fingerprint()
    trained = train_local(global_params, data.train, cfg.local_epochs,
                          cfg.local_lr, derive_stream(seed, "train", k, shard_key),
                          cfg.batch_size)

    new_personal = None
    benefit_model = trained
    if cfg.strategy.kind == "ditto":
        new_personal = ditto_personalize(
            global_params, personal if personal is not None else global_params,
            data.train, cfg.strategy,
            derive_stream(seed, "personal", k, shard_key), cfg.batch_size)
        benefit_model = new_personal

    achieved = evaluate(benefit_model, data.test)
    post_rec = eq_odds_record(n, achieved.confusion, cfg.eqodds_mode)
    record = ClientRoundRecord(
        client_id=n, round=k,
        performance=normalizer(achieved.accuracy),
        reward=normalizer(received.accuracy),
        eqodds=post_rec, pre_eqodds=pre_rec,
        train_size=len(data.train), test_size=len(data.test),
    )
    update = ClientUpdate(client_id=n, params=trained, train_size=len(data.train),
                          local_loss_before=loss_before)
    return _ClientWork(update=update, record=record, personal=new_personal)


def _aggregate(cfg: ExperimentConfig, global_params: ModelParams,
               updates: Sequence[ClientUpdate]) -> ModelParams:
    if cfg.strategy.kind == "qfedavg":
        return aggregate_qfedavg(global_params, updates, cfg.strategy)
    # ditto's global track aggregates exactly like fedavg
    return aggregate_fedavg(updates)


def _snapshot(k: int, selected: list[int], records: dict[int, ClientRoundRecord],
              ledger: ShapleyLedger, cfg: ExperimentConfig) -> FairnessSnapshot:
    reasons: dict[str, str] = {}
    values: dict[str, float | None] = {}
    gains_g: dict[int, float] = {}
    gains_r: dict[int, float] = {}
    excluded: list[tuple[int, str]] = []
    clamped = 0

    performances = {n: records[n].performance for n in selected}
    rewards = {n: records[n].reward for n in selected}

    try:
        rep = individual_fairness(performances, ledger, selected)
        values["f_j"] = rep.value
        gains_g = rep.gains
        excluded = rep.excluded
        clamped += rep.clamped_negative
    except UndefinedMetricError as exc:
        values["f_j"] = None
        reasons["f_j"] = exc.reason
        excluded = [(n, "contribution-below-epsilon") for n in selected]

    try:
        values["f_g"] = group_fairness([records[n].eqodds for n in selected])
    except UndefinedMetricError as exc:
        values["f_g"] = None
        reasons["f_g"] = exc.reason

    try:
        rep = incentive_fairness(rewards, ledger, selected)
        values["f_r"] = rep.value
        gains_r = rep.gains
        clamped += rep.clamped_negative
    except UndefinedMetricError as exc:
        values["f_r"] = None
        reasons["f_r"] = exc.reason

    values["f_o"] = orchestrator_fairness(performances, selected)

    try:
        values["F_T"] = general_fairness(values["f_j"], values["f_g"],
                                         values["f_r"], values["f_o"],
                                         cfg.fairness_weights)
    except UndefinedMetricError as exc:
        values["F_T"] = None
        reasons["F_T"] = exc.reason

    return FairnessSnapshot(
        round=k, f_j=values["f_j"], f_g=values["f_g"], f_r=values["f_r"],
        f_o=values["f_o"], F_T=values["F_T"], reasons=reasons,
        gains_G=gains_g, gains_R=gains_r, excluded_clients=excluded,
        clamped_negative=clamped,
    )


# ---------------------------------------------------------------------------
# Full run
# ---------------------------------------------------------------------------

def run_single(cfg: ExperimentConfig, seed: int,
               data: tuple[list[ClientDataset], AuxiliaryDataset] | None = None,
               performance_normalizer: Callable[[float], float] | None = None,
               timing: bool = False) -> RunResult:
    """Simulate one full K-round run for one seed.

    data can be supplied directly (pre-partitioned) to bypass dataset
    construction; accuracy is already in [0, 1], so the default performance
    normalizer is the identity.
    """
    import time

    clients, aux = data if data is not None else build_data(cfg, seed)
    if len(clients) != cfg.total_clients:
        raise ConfigurationError(
            f"partition produced {len(clients)} clients, config says {cfg.total_clients}"
        )
    if len(aux.data) == 0:
        raise ConfigurationError("auxiliary dataset is empty; increase auxiliary_fraction")
    normalizer = performance_normalizer or (lambda x: x)
    by_id = {c.client_id: c for c in clients}
    n_classes = _n_classes(clients, aux)
    n_features = clients[0].train.n_features

    global_params = init_params(cfg.model_kind, n_features, n_classes,
                                derive_stream(seed, "init"))
    personal: dict[int, ModelParams] = {}
    ledger = ShapleyLedger()
    rounds: list[RoundOutput] = []
    clocks: list[float] = []
    threads = worker_count()

    for k in range(1, cfg.rounds + 1):
        t0 = time.perf_counter()
        selected = select_clients(sorted(by_id), cfg.clients_per_round,
                                  derive_stream(seed, "select", k))

        def work(n: int) -> _ClientWork:
            return _client_round(n, by_id[n], global_params, cfg, seed, k,
                                 personal.get(n), normalizer)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                done = dict(zip(selected, pool.map(work, selected)))
        else:
            done = {n: work(n) for n in selected}

        updates = [done[n].update for n in selected]
        records = {n: done[n].record for n in selected}
        for n in selected:
            if done[n].personal is not None:
                personal[n] = done[n].personal

        new_global = _aggregate(cfg, global_params, updates)
        round_values = round_shapley(
            {n: done[n].update.params for n in selected}, selected,
            global_params, aux, cfg.shapley_weighting, cache=UtilityCache())
        ledger = accumulate(ledger, k, round_values)
        snapshot = _snapshot(k, selected, records, ledger, cfg)
        aux_accuracy = evaluate(new_global, aux.data).accuracy

        rounds.append(RoundOutput(
            round=k, selected=selected, fairness=snapshot,
            clients=[records[n] for n in selected],
            shapley={n: round_values[n] for n in selected},
            aux_accuracy=aux_accuracy,
        ))
        global_params = new_global
        clocks.append(time.perf_counter() - t0)

    summary = summarize_run(rounds, cfg.window())
    return RunResult(config=cfg, seed=seed, rounds=rounds, ledger=ledger,
                     summary=summary, wall_clock=clocks if timing else None)


def summarize_run(rounds: Sequence[RoundOutput],
                  window: tuple[int, int]) -> dict[str, float | None]:
    """Mean of each notion (and auxiliary accuracy) over the inclusive window.

    Rounds where a notion is undefined drop out of its mean; a notion
    undefined across the whole window stays None.
    """
    lo, hi = window
    in_window = [r for r in rounds if lo <= r.round <= hi]
    out: dict[str, float | None] = {}
    for notion in NOTIONS:
        vals = [r.fairness.value(notion) for r in in_window]
        vals = [v for v in vals if v is not None]
        out[notion] = sum(vals) / len(vals) if vals else None
    aux_vals = [r.aux_accuracy for r in in_window]
    out["aux_accuracy"] = sum(aux_vals) / len(aux_vals) if aux_vals else None
    return out


def run_experiment(cfg: ExperimentConfig, seeds: Sequence[int] | None = None,
                   timing: bool = False) -> tuple[list[RunResult], dict]:
    """One independent run per seed plus the cross-seed aggregate."""
    seeds = list(seeds) if seeds is not None else list(cfg.seeds)
    if not seeds:
        raise ConfigurationError("at least one seed is required")
    runs = [run_single(cfg, seed, timing=timing) for seed in seeds]
    return runs, aggregate_runs(runs)


def _mean_std(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    return sum(values) / len(values), (pstdev(values) if len(values) > 1 else 0.0)


def aggregate_runs(runs: Sequence[RunResult]) -> dict:
    """Cross-seed per-round means/population-stdevs and summary statistics."""
    if not runs:
        raise ConfigurationError("nothing to aggregate")
    cfg = runs[0].config
    n_rounds = cfg.rounds
    per_round = []
    for k in range(1, n_rounds + 1):
        entry: dict = {"round": k}
        for notion in NOTIONS:
            vals = [r.snapshot(k).value(notion) for r in runs]
            vals = [v for v in vals if v is not None]
            mean, std = _mean_std(vals)
            entry[notion] = {"mean": mean, "std": std, "defined_runs": len(vals)}
        aux_vals = [r.rounds[k - 1].aux_accuracy for r in runs]
        mean, std = _mean_std(aux_vals)
        entry["aux_accuracy"] = {"mean": mean, "std": std, "defined_runs": len(aux_vals)}
        per_round.append(entry)

    summary: dict = {}
    for key in list(NOTIONS) + ["aux_accuracy"]:
        vals = [r.summary[key] for r in runs if r.summary[key] is not None]
        mean, std = _mean_std(vals)
        summary[key] = {"mean": mean, "std": std, "defined_runs": len(vals)}

    lo, hi = cfg.window()
    return {
        "name": cfg.name,
        "seeds": [r.seed for r in runs],
        "summary_window": [lo, hi],
        "fairness_threshold": cfg.fairness_threshold,
        "per_round": per_round,
        "summary": summary,
        "verdicts": threshold_check(
            {key: summary[key]["mean"] for key in NOTIONS}, cfg.fairness_threshold),
    }


def threshold_check(summary_means: dict[str, float | None],
                    threshold: float) -> dict[str, str]:
    """pass iff mean >= threshold (strict boundary), indeterminate if undefined."""
    verdicts = {}
    for notion in NOTIONS:
        value = summary_means.get(notion)
        if value is None:
            verdicts[notion] = "indeterminate"
        else:
            verdicts[notion] = "pass" if value >= threshold else "fail"
    return verdicts
