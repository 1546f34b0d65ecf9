"""Fairness metric kernel: Jain index, equalized-odds scores, the four notions.

Everything here is a pure function over plain values. Round orchestration,
persistence and undefined-metric bookkeeping live in the engine; this module
raises UndefinedMetricError whenever a metric has no value for its inputs and
never guesses one.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, Sequence

from .errors import ConfigurationError, UndefinedMetricError
from .numkit import GroupCounts

# Clients whose cumulative contribution is at or below this floor are excluded
# from gain sets instead of dividing by a near-zero number.
CONTRIBUTION_EPSILON = 1e-9

EQODDS_MODES = ("bounded", "signed_sum")


class ContributionSource(Protocol):
    def cumulative_value(self, client_id: int) -> float: ...


@dataclass(frozen=True)
class FairnessWeights:
    """Convex weights for combining the four notions into one number."""

    w_j: float = 0.25
    w_g: float = 0.25
    w_r: float = 0.25
    w_o: float = 0.25

    def __post_init__(self):
        parts = (self.w_j, self.w_g, self.w_r, self.w_o)
        if any(w < 0 for w in parts):
            raise ConfigurationError("fairness weights must be >= 0")
        if abs(sum(parts) - 1.0) > 1e-9:
            raise ConfigurationError("fairness weights must sum to 1")


@dataclass(frozen=True)
class EqOddsRecord:
    """One client's equalized-odds scores, one value per computable attribute."""

    client_id: int
    per_attribute: dict[int, float]
    skipped_attributes: list[tuple[int, str]] = field(default_factory=list)

    def mean_score(self) -> float:
        if not self.per_attribute:
            raise UndefinedMetricError("no-computable-attributes")
        return sum(self.per_attribute.values()) / len(self.per_attribute)


@dataclass(frozen=True)
class GainReport:
    """A JFI-over-gains notion value plus everything needed to explain it."""

    value: float
    gains: dict[int, float]
    excluded: list[tuple[int, str]]
    clamped_negative: int


def jain_index(values: Sequence[float]) -> float:
    """(sum x)^2 / (n * sum x^2) for non-negative x, in [1/n, 1].

    1 means all values equal; 1/n means a single non-zero value. Undefined
    (0/0) when every value is zero.
    """
    vals = list(values)
    if not vals:
        raise ConfigurationError("jain_index needs at least one value")
    if any(v < 0 for v in vals):
        raise ConfigurationError("jain_index requires non-negative values")
    square_sum = sum(v * v for v in vals)
    if square_sum == 0.0:
        raise UndefinedMetricError("all-zero-values")
    total = sum(vals)
    return (total * total) / (len(vals) * square_sum)


def eq_odds_diff(counts_by_group: Mapping[int, GroupCounts], mode: str = "bounded") -> float:
    """Equalized-odds score for one attribute from per-group confusion counts.

    With dTPR and dFPR the between-group differences of true- and
    false-positive rates:
      bounded (default): 1 - (|dTPR| + |dFPR|) / 2, in [0, 1], 1 iff parity
      signed_sum:        |1 - (dTPR + dFPR)|
    The literal form can reward maximal disparity (dTPR = dFPR = 1 scores 1)
    and exceed 1, which is why bounded is the default.
    """
    if mode not in EQODDS_MODES:
        raise ConfigurationError(f"unknown eq-odds mode {mode!r}")
    g0, g1 = counts_by_group[0], counts_by_group[1]
    if min(g0.positives, g1.positives) < 1 or min(g0.negatives, g1.negatives) < 1:
        raise UndefinedMetricError("insufficient-group-samples")
    d_tpr = g1.tp / g1.positives - g0.tp / g0.positives
    d_fpr = g1.fp / g1.negatives - g0.fp / g0.negatives
    if mode == "signed_sum":
        return abs(1.0 - (d_tpr + d_fpr))
    return 1.0 - (abs(d_tpr) + abs(d_fpr)) / 2.0


def eq_odds_record(client_id: int, confusion: Mapping[int, Mapping[int, GroupCounts]],
                   mode: str = "bounded") -> EqOddsRecord:
    """Score every attribute of one client, skipping the incomputable ones."""
    per_attribute: dict[int, float] = {}
    skipped: list[tuple[int, str]] = []
    for attr in sorted(confusion):
        try:
            per_attribute[attr] = eq_odds_diff(confusion[attr], mode)
        except UndefinedMetricError as exc:
            skipped.append((attr, exc.reason))
    return EqOddsRecord(client_id=client_id, per_attribute=per_attribute,
                        skipped_attributes=skipped)


def _gain_report(values: Mapping[int, float], contributions: ContributionSource,
                 selected: Iterable[int]) -> GainReport:
    """JFI of value-over-contribution ratios across the selected clients.

    Clients with contribution <= epsilon are excluded (dividing by a vanishing
    contribution would fabricate unbounded gains); negative ratios are clamped
    to zero since the index is defined for non-negative inputs. Both events
    are surfaced, never hidden.
    """
    gains: dict[int, float] = {}
    excluded: list[tuple[int, str]] = []
    clamped = 0
    for n in sorted(selected):
        s = contributions.cumulative_value(n)
        if s <= CONTRIBUTION_EPSILON:
            excluded.append((n, "contribution-below-epsilon"))
            continue
        g = values[n] / s
        if g < 0:
            g = 0.0
            clamped += 1
        gains[n] = g
    if not gains:
        raise UndefinedMetricError("all-clients-excluded")
    value = jain_index(list(gains.values()))
    return GainReport(value=value, gains=gains, excluded=excluded,
                      clamped_negative=clamped)


def individual_fairness(performances: Mapping[int, float],
                        contributions: ContributionSource,
                        selected: Iterable[int]) -> GainReport:
    """Uniformity of performance-to-contribution gains across selected clients."""
    selected = list(selected)
    if not selected:
        raise ConfigurationError("individual_fairness needs a non-empty selection")
    return _gain_report(performances, contributions, selected)


def incentive_fairness(rewards: Mapping[int, float],
                       contributions: ContributionSource,
                       selected: Iterable[int]) -> GainReport:
    """Uniformity of reward-to-contribution gains across selected clients.

    The reward is the quality of the global model as received, measured before
    any local training in the round, so it reflects what the federation gave
    the client rather than the client's own training ability.
    """
    selected = list(selected)
    if not selected:
        raise ConfigurationError("incentive_fairness needs a non-empty selection")
    return _gain_report(rewards, contributions, selected)


def group_fairness(records: Sequence[EqOddsRecord]) -> float:
    """Median across clients of each client's mean equalized-odds score.

    Clients with no computable attribute drop out of the median; with an even
    number of remaining clients the median is the mean of the middle two.
    """
    means = []
    for rec in records:
        if rec.per_attribute:
            means.append(rec.mean_score())
    if not means:
        raise UndefinedMetricError("no-computable-eqodds-records")
    return float(statistics.median(means))


def orchestrator_fairness(performances: Mapping[int, float],
                          selected: Iterable[int]) -> float:
    """Mean normalized performance over the selected clients, the server's payoff."""
    selected = list(selected)
    if not selected:
        raise ConfigurationError("orchestrator_fairness needs a non-empty selection")
    vals = [performances[n] for n in sorted(selected)]
    if any(v < 0 or v > 1 for v in vals):
        raise ConfigurationError("performances must be normalized into [0, 1]")
    return float(sum(vals) / len(vals))


def general_fairness(f_j: float | None, f_g: float | None, f_r: float | None,
                     f_o: float | None, weights: FairnessWeights) -> float:
    """Weighted sum of the four notions; undefined if any component is."""
    parts = {"f_j": f_j, "f_g": f_g, "f_r": f_r, "f_o": f_o}
    missing = sorted(name for name, v in parts.items() if v is None)
    if missing:
        raise UndefinedMetricError("undefined-components:" + ",".join(missing))
    return (weights.w_j * f_j + weights.w_g * f_g
            + weights.w_r * f_r + weights.w_o * f_o)
