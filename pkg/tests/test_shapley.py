"""Shapley accounting tests: hand-enumerated oracles and the classic axioms."""

import math

import numpy as np
import pytest

from fedfair.errors import ConfigurationError, ProtocolError
from fedfair.numkit import LabeledBatch, ModelParams
from fedfair.shapley import (
    ShapleyLedger,
    UtilityCache,
    accumulate,
    round_shapley,
    shapley_from_utility,
    subset_utility,
)


def table_utility(table):
    """Utility function backed by an explicit {frozenset: value} table."""
    return lambda z: table[frozenset(z)]


def aux_batch():
    feats = np.array([[0.1], [0.4], [0.6], [0.9]])
    labels = np.array([0, 0, 1, 1])
    return LabeledBatch(feats, labels, np.zeros((4, 1), int))


def scalar_logistic(w, b0=0.0, b1=0.0):
    # 1 feature, 2 classes; class-1 weight w, class-0 weight 0
    return ModelParams(np.array([0.0, w, b0, b1]), ((1, 2),), "logistic")


# ---------------------------------------------------------------------------
# subset_utility
# ---------------------------------------------------------------------------

def test_empty_subset_is_zero():
    theta = scalar_logistic(1.0)
    assert subset_utility({1: theta}, [], theta, aux_batch()) == 0.0


def test_unchanged_params_have_zero_utility():
    theta = scalar_logistic(2.0)
    assert subset_utility({1: theta}, [1], theta, aux_batch()) == pytest.approx(0.0, abs=1e-15)


def test_subset_utility_matches_hand_cross_entropy():
    # two clients with scalar weights 2 and 6, coalition average has weight 4
    data = aux_batch()
    before = scalar_logistic(0.0)
    params = {1: scalar_logistic(2.0), 2: scalar_logistic(6.0)}

    def hand_loss(w):
        # mean of -log softmax at the true class, summed by hand per sample
        total = 0.0
        for x, y in zip(data.features[:, 0], data.labels):
            z0, z1 = 0.0, w * x
            m = max(z0, z1)
            logz = m + math.log(math.exp(z0 - m) + math.exp(z1 - m))
            total += logz - (z1 if y == 1 else z0)
        return total / len(data.labels)

    expected = hand_loss(0.0) - hand_loss(4.0)
    got = subset_utility(params, [1, 2], before, data)
    assert got == pytest.approx(expected, abs=1e-9)


def test_subset_utility_unknown_member_rejected():
    theta = scalar_logistic(1.0)
    with pytest.raises(ConfigurationError):
        subset_utility({1: theta}, [1, 2], theta, aux_batch())


# ---------------------------------------------------------------------------
# shapley_from_utility: hand-enumerated oracles
# ---------------------------------------------------------------------------

def test_two_player_hand_enumeration():
    table = {frozenset(): 0.0, frozenset({1}): 0.2, frozenset({2}): 0.4,
             frozenset({1, 2}): 0.5}
    for weighting in ("flat", "classic"):
        s = shapley_from_utility([1, 2], table_utility(table), weighting)
        assert s[1] == pytest.approx(0.15, abs=1e-12)
        assert s[2] == pytest.approx(0.35, abs=1e-12)
        assert s[1] + s[2] == pytest.approx(0.5, abs=1e-12)


def test_three_player_cardinality_utility():
    players = [1, 2, 3]
    u = lambda z: float(len(z))
    classic = shapley_from_utility(players, u, "classic")
    flat = shapley_from_utility(players, u, "flat")
    for n in players:
        assert classic[n] == pytest.approx(1.0, abs=1e-12)
        assert flat[n] == pytest.approx(4 / 3, abs=1e-12)
    assert sum(classic.values()) == pytest.approx(3.0, abs=1e-12)


def test_dummy_player_gets_zero():
    # player 3 never changes the utility
    def u(z):
        return 0.7 * (1 in z) + 0.2 * (2 in z)

    for weighting in ("flat", "classic"):
        s = shapley_from_utility([1, 2, 3], u, weighting)
        assert s[3] == pytest.approx(0.0, abs=1e-12)


def test_symmetric_players_get_equal_values():
    def u(z):
        return float(len({1, 2} & z) > 0) + 0.3 * (3 in z)

    for weighting in ("flat", "classic"):
        s = shapley_from_utility([1, 2, 3], u, weighting)
        assert s[1] == pytest.approx(s[2], abs=1e-12)


def test_linearity_in_utility():
    gen = np.random.default_rng(11)
    players = [1, 2, 3, 4]
    subsets = [frozenset(c) for size in range(5)
               for c in __import__("itertools").combinations(players, size)]
    t1 = {z: float(gen.normal()) for z in subsets}
    t2 = {z: float(gen.normal()) for z in subsets}
    t1[frozenset()] = 0.0
    t2[frozenset()] = 0.0
    summed = {z: t1[z] + t2[z] for z in subsets}
    for weighting in ("flat", "classic"):
        s1 = shapley_from_utility(players, table_utility(t1), weighting)
        s2 = shapley_from_utility(players, table_utility(t2), weighting)
        s12 = shapley_from_utility(players, table_utility(summed), weighting)
        for n in players:
            assert s12[n] == pytest.approx(s1[n] + s2[n], abs=1e-9)


def test_classic_efficiency_on_random_tables():
    gen = np.random.default_rng(23)
    import itertools

    for m in (3, 4, 5):
        players = list(range(m))
        table = {frozenset(c): float(gen.normal())
                 for size in range(m + 1)
                 for c in itertools.combinations(players, size)}
        table[frozenset()] = 0.0
        s = shapley_from_utility(players, table_utility(table), "classic")
        assert sum(s.values()) == pytest.approx(table[frozenset(players)], abs=1e-9)


def test_flat_equals_classic_up_to_two_players():
    gen = np.random.default_rng(31)
    for players in ([7], [3, 9]):
        table = {frozenset(): 0.0}
        import itertools

        for size in range(1, len(players) + 1):
            for c in itertools.combinations(players, size):
                table[frozenset(c)] = float(gen.normal())
        a = shapley_from_utility(players, table_utility(table), "flat")
        b = shapley_from_utility(players, table_utility(table), "classic")
        assert a == b


# ---------------------------------------------------------------------------
# round_shapley on real models
# ---------------------------------------------------------------------------

def test_null_player_near_zero_on_models():
    data = aux_batch()
    before = scalar_logistic(1.0)
    params = {1: scalar_logistic(3.0), 2: before}  # client 2 trained nothing
    for weighting in ("flat", "classic"):
        s = round_shapley(params, [1, 2], before, data, weighting)
        # not exactly zero: client 2 still drags coalition averages around,
        # but alone it contributes nothing
        u2 = subset_utility(params, [2], before, data)
        assert abs(u2) <= 1e-9
        assert s[1] != 0.0


def test_identical_submissions_get_identical_values():
    data = aux_batch()
    before = scalar_logistic(0.0)
    same = scalar_logistic(2.5)
    params = {1: same, 2: same, 3: same}
    for weighting in ("flat", "classic"):
        s = round_shapley(params, [1, 2, 3], before, data, weighting)
        assert s[1] == s[2] == s[3]


def test_cache_on_off_equality_and_single_evaluation():
    data = aux_batch()
    before = scalar_logistic(0.0)
    gen = np.random.default_rng(5)
    params = {n: scalar_logistic(float(gen.normal(2, 1))) for n in range(5)}
    cache = UtilityCache()
    with_cache = round_shapley(params, range(5), before, data, cache=cache)
    without = round_shapley(params, range(5), before, data, cache=None)
    assert with_cache == without
    assert len(cache) == 2**5  # every coalition incl. empty evaluated exactly once


def test_selection_cap_enforced():
    data = aux_batch()
    before = scalar_logistic(0.0)
    params = {n: before for n in range(11)}
    with pytest.raises(ConfigurationError):
        round_shapley(params, range(11), before, data)


def test_round_shapley_efficiency_classic_weighting():
    data = aux_batch()
    before = scalar_logistic(0.0)
    gen = np.random.default_rng(17)
    params = {n: scalar_logistic(float(gen.normal(1, 2))) for n in range(4)}
    s = round_shapley(params, range(4), before, data, "classic")
    full = subset_utility(params, range(4), before, data)
    assert sum(s.values()) == pytest.approx(full, abs=1e-9)


# ---------------------------------------------------------------------------
# Ledger
# ---------------------------------------------------------------------------

def test_ledger_accumulates_and_defaults_to_zero():
    led = ShapleyLedger()
    led = accumulate(led, 1, {1: 0.1, 2: 0.05})
    led = accumulate(led, 2, {1: 0.2, 3: 0.0})
    assert led.cumulative_value(1) == pytest.approx(0.3)
    assert led.cumulative_value(2) == pytest.approx(0.05)
    assert led.cumulative_value(3) == 0.0
    assert led.cumulative_value(99) == 0.0  # absentee across all rounds
    assert led.round_value(1, 3) == 0.0
    assert led.rounds() == [1, 2]


def test_ledger_cumulative_matches_round_sums():
    led = ShapleyLedger()
    gen = np.random.default_rng(7)
    for k in range(1, 6):
        led = accumulate(led, k, {n: float(gen.normal()) for n in range(4)})
    for n in range(4):
        total = sum(led.round_value(k, n) for k in led.rounds())
        assert led.cumulative_value(n) == pytest.approx(total, abs=1e-12)


def test_ledger_zero_rounds_and_duplicate_rejection():
    led = accumulate(ShapleyLedger(), 1, {1: 0.0, 2: 0.0})
    assert led.cumulative_value(1) == 0.0
    with pytest.raises(ProtocolError):
        accumulate(led, 1, {1: 0.5})


def test_ledger_is_not_mutated_by_accumulate():
    led = accumulate(ShapleyLedger(), 1, {1: 0.1})
    accumulate(led, 2, {1: 0.9})
    assert led.rounds() == [1]
    assert led.cumulative_value(1) == pytest.approx(0.1)
