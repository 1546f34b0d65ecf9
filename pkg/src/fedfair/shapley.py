"""Exact per-round Shapley contribution accounting over a round's participants.

The value of a coalition is the drop in auxiliary-set loss achieved by the
unweighted average of the coalition members' submitted parameters, relative
to the global model the round started from. Enumeration is exact and
therefore exponential in the number of selected clients; a hard cap keeps
that honest.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .errors import ConfigurationError, ProtocolError
from .numkit import LabeledBatch, ModelParams, average_params, mean_loss

WEIGHTINGS = ("flat", "classic")
DEFAULT_MAX_SELECTED = 10


@dataclass(frozen=True)
class ShapleyLedger:
    """Per-round contributions and their running per-client totals.

    Clients absent from a round implicitly contributed zero; lookups return
    0.0 for them so the invariant total == sum over rounds always holds.
    """

    per_round: dict[int, dict[int, float]] = field(default_factory=dict)
    cumulative: dict[int, float] = field(default_factory=dict)

    def round_value(self, round_index: int, client_id: int) -> float:
        return self.per_round.get(round_index, {}).get(client_id, 0.0)

    def cumulative_value(self, client_id: int) -> float:
        return self.cumulative.get(client_id, 0.0)

    def rounds(self) -> list[int]:
        return sorted(self.per_round)


def accumulate(ledger: ShapleyLedger, round_index: int,
               values: Mapping[int, float]) -> ShapleyLedger:
    """Extend the ledger with one round's values; rounds are write-once."""
    if round_index in ledger.per_round:
        raise ProtocolError(f"round {round_index} already recorded")
    per_round = dict(ledger.per_round)
    per_round[round_index] = {int(n): float(s) for n, s in values.items()}
    cumulative = dict(ledger.cumulative)
    for n, s in values.items():
        cumulative[int(n)] = cumulative.get(int(n), 0.0) + float(s)
    return ShapleyLedger(per_round=per_round, cumulative=cumulative)


class UtilityCache:
    """Memo of coalition utilities for one round, keyed by member set."""

    def __init__(self):
        self._table: dict[frozenset[int], float] = {}

    def get_or_compute(self, subset: frozenset[int],
                       compute: Callable[[frozenset[int]], float]) -> float:
        if subset not in self._table:
            self._table[subset] = compute(subset)
        return self._table[subset]

    def __len__(self) -> int:
        return len(self._table)


def _aux_batch(aux) -> LabeledBatch:
    # accepts the server-side AuxiliaryDataset wrapper or a bare batch
    return aux.data if hasattr(aux, "data") else aux


def subset_utility(round_params: Mapping[int, ModelParams], subset: Iterable[int],
                   global_before: ModelParams, aux) -> float:
    """Loss reduction on the auxiliary set from averaging the subset's models.

    The empty coalition is worth 0 by definition (it leaves the global model
    as it was, and the utility of the unchanged model is zero).
    """
    members = sorted(set(subset))
    if not members:
        return 0.0
    unknown = [n for n in members if n not in round_params]
    if unknown:
        raise ConfigurationError(f"subset contains clients without params: {unknown}")
    batch = _aux_batch(aux)
    if len(batch) == 0:
        raise ConfigurationError("auxiliary dataset is empty")
    merged = average_params([round_params[n] for n in members])
    return mean_loss(global_before, batch) - mean_loss(merged, batch)


def shapley_from_utility(players: Iterable[int],
                         utility: Callable[[frozenset[int]], float],
                         weighting: str = "flat") -> dict[int, float]:
    """Marginal-contribution sums over all coalitions, under either weighting.

    flat:    s_n = (1/m) * sum over S subset of players-without-n of
                   [U(S + n) - U(S)]
    classic: the same sum with each term divided by binom(m-1, |S|), which is
    the standard Shapley value and restores the efficiency axiom for m >= 3.
    The two coincide for m <= 2.
    """
    if weighting not in WEIGHTINGS:
        raise ConfigurationError(f"unknown shapley weighting {weighting!r}")
    ids = sorted(set(players))
    m = len(ids)
    out: dict[int, float] = {}
    for n in ids:
        others = [p for p in ids if p != n]
        total = 0.0
        for size in range(m):
            for combo in itertools.combinations(others, size):
                s = frozenset(combo)
                marginal = utility(s | {n}) - utility(s)
                if weighting == "classic":
                    marginal /= math.comb(m - 1, size)
                total += marginal
        out[n] = total / m
    return out


def round_shapley(round_params: Mapping[int, ModelParams], selected: Iterable[int],
                  global_before: ModelParams, aux, weighting: str = "flat",
                  cache: UtilityCache | None = None,
                  max_selected: int = DEFAULT_MAX_SELECTED) -> dict[int, float]:
    """Exact Shapley value of each selected client for one round.

    Each distinct coalition's utility is evaluated once (memoized); with m
    selected clients that is 2^m loss evaluations on the auxiliary set.
    """
    ids = sorted(set(selected))
    if len(ids) > max_selected:
        raise ConfigurationError(
            f"{len(ids)} selected clients exceeds the exact-enumeration cap of "
            f"{max_selected}; approximate Shapley estimation is out of scope"
        )
    missing = [n for n in ids if n not in round_params]
    if missing:
        raise ConfigurationError(f"selected clients without submitted params: {missing}")
    memo = cache if cache is not None else UtilityCache()

    def utility(subset: frozenset[int]) -> float:
        return memo.get_or_compute(
            subset, lambda z: subset_utility(round_params, z, global_before, aux))

    return shapley_from_utility(ids, utility, weighting)
