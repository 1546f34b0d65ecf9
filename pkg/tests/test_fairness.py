"""Metric kernel tests. Expected values are hand arithmetic or brute force."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedfair.errors import ConfigurationError, UndefinedMetricError
from fedfair.fairness import (
    EqOddsRecord,
    FairnessWeights,
    eq_odds_diff,
    eq_odds_record,
    general_fairness,
    group_fairness,
    incentive_fairness,
    individual_fairness,
    jain_index,
    orchestrator_fairness,
)
from fedfair.numkit import GroupCounts
from fedfair.shapley import ShapleyLedger


def counts(tp, fp, tn, fn):
    return GroupCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def ledger_with(cumulative):
    return ShapleyLedger(per_round={}, cumulative=dict(cumulative))


# zeros are allowed; non-zero entries stay away from the subnormal range so
# sums of squares cannot underflow to 0
positive_lists = st.lists(
    st.one_of(st.just(0.0), st.floats(min_value=1e-6, max_value=1e6)),
    min_size=1, max_size=20,
).filter(lambda xs: any(x > 0 for x in xs))


# ---------------------------------------------------------------------------
# Jain index
# ---------------------------------------------------------------------------

def test_jain_equal_values_is_one():
    for c in (0.1, 1.0, 7.5):
        assert jain_index([c, c, c, c]) == pytest.approx(1.0, abs=1e-12)


def test_jain_single_nonzero_is_one_over_n():
    assert jain_index([3.0, 0, 0, 0, 0]) == pytest.approx(0.2, abs=1e-12)


def test_jain_1_2_3():
    # (1+2+3)^2 / (3 * (1+4+9)) = 36/42 = 6/7
    assert jain_index([1, 2, 3]) == pytest.approx(6 / 7, abs=1e-12)


def test_jain_rejects_bad_input():
    with pytest.raises(ConfigurationError):
        jain_index([])
    with pytest.raises(ConfigurationError):
        jain_index([1.0, -0.5])
    with pytest.raises(UndefinedMetricError):
        jain_index([0.0, 0.0])


@given(positive_lists, st.floats(min_value=1e-3, max_value=1e3))
@settings(max_examples=200, deadline=None)
def test_jain_scale_invariance(xs, c):
    assert jain_index([c * x for x in xs]) == pytest.approx(jain_index(xs), abs=1e-12)


@given(positive_lists, st.randoms())
@settings(max_examples=200, deadline=None)
def test_jain_permutation_invariance(xs, rnd):
    shuffled = list(xs)
    rnd.shuffle(shuffled)
    assert jain_index(shuffled) == pytest.approx(jain_index(xs), abs=1e-12)


@given(positive_lists)
@settings(max_examples=200, deadline=None)
def test_jain_bounds(xs):
    j = jain_index(xs)
    assert 1 / len(xs) - 1e-12 <= j <= 1 + 1e-12


# ---------------------------------------------------------------------------
# Equalized odds
# ---------------------------------------------------------------------------

def test_eq_odds_perfect_parity_both_modes():
    by_group = {0: counts(5, 2, 8, 5), 1: counts(10, 4, 16, 10)}  # same rates
    assert eq_odds_diff(by_group, "bounded") == pytest.approx(1.0, abs=1e-12)
    assert eq_odds_diff(by_group, "signed_sum") == pytest.approx(1.0, abs=1e-12)


def test_eq_odds_hand_case():
    # group1: TPR 7/10, FPR 3/10; group0: TPR 5/10, FPR 2/10
    by_group = {0: counts(5, 2, 8, 5), 1: counts(7, 3, 7, 3)}
    assert eq_odds_diff(by_group, "bounded") == pytest.approx(0.85, abs=1e-12)
    assert eq_odds_diff(by_group, "signed_sum") == pytest.approx(0.7, abs=1e-12)


def test_eq_odds_maximal_disparity_anomaly():
    # group1 always predicted positive, group0 never: dTPR = dFPR = 1
    by_group = {0: counts(0, 0, 5, 5), 1: counts(5, 5, 0, 0)}
    assert eq_odds_diff(by_group, "bounded") == pytest.approx(0.0, abs=1e-12)
    assert eq_odds_diff(by_group, "signed_sum") == pytest.approx(1.0, abs=1e-12)


def test_eq_odds_insufficient_samples_skipped():
    by_group = {0: counts(0, 1, 1, 0), 1: counts(1, 1, 1, 1)}  # group0 has no positives
    with pytest.raises(UndefinedMetricError):
        eq_odds_diff(by_group)
    rec = eq_odds_record(3, {0: by_group})
    assert rec.per_attribute == {}
    assert rec.skipped_attributes == [(0, "insufficient-group-samples")]


def test_eq_odds_bounded_matches_per_sample_brute_force():
    # oracle: rates tallied sample by sample in pure python
    gen = np.random.default_rng(2718)
    for _ in range(100):
        n = int(gen.integers(20, 201))
        while True:
            y = gen.integers(0, 2, size=n)
            yhat = gen.integers(0, 2, size=n)
            a = gen.integers(0, 2, size=n)
            ok = all(
                sum(1 for i in range(n) if a[i] == g and y[i] == v) > 0
                for g in (0, 1) for v in (0, 1)
            )
            if ok:
                break
        rates = {}
        for g in (0, 1):
            pos = [i for i in range(n) if a[i] == g and y[i] == 1]
            neg = [i for i in range(n) if a[i] == g and y[i] == 0]
            rates[g] = (
                sum(1 for i in pos if yhat[i] == 1) / len(pos),
                sum(1 for i in neg if yhat[i] == 1) / len(neg),
            )
        expected = 1.0 - (abs(rates[1][0] - rates[0][0]) + abs(rates[1][1] - rates[0][1])) / 2
        by_group = {
            g: counts(
                tp=int(np.sum((a == g) & (yhat == 1) & (y == 1))),
                fp=int(np.sum((a == g) & (yhat == 1) & (y == 0))),
                tn=int(np.sum((a == g) & (yhat == 0) & (y == 0))),
                fn=int(np.sum((a == g) & (yhat == 0) & (y == 1))),
            )
            for g in (0, 1)
        }
        assert eq_odds_diff(by_group, "bounded") == expected


# ---------------------------------------------------------------------------
# Individual and incentive fairness
# ---------------------------------------------------------------------------

def test_individual_uniform_gains_is_one():
    led = ledger_with({1: 0.3, 2: 0.3, 3: 0.3})
    rep = individual_fairness({1: 0.8, 2: 0.8, 3: 0.8}, led, [1, 2, 3])
    assert rep.value == pytest.approx(1.0, abs=1e-12)


def test_individual_proportional_is_one():
    led = ledger_with({1: 0.1, 2: 0.2, 3: 0.4})
    perf = {1: 0.2, 2: 0.4, 3: 0.8}  # x = 2 s
    rep = individual_fairness(perf, led, [1, 2, 3])
    assert rep.value == pytest.approx(1.0, abs=1e-12)


def test_individual_reduces_to_jain_of_ratios():
    led = ledger_with({1: 0.3, 2: 0.3, 3: 0.3})
    rep = individual_fairness({1: 0.9, 2: 0.6, 3: 0.3}, led, [1, 2, 3])
    assert rep.value == pytest.approx(6 / 7, abs=1e-12)
    assert rep.gains == pytest.approx({1: 3.0, 2: 2.0, 3: 1.0})


def test_individual_excludes_vanishing_contributions():
    led = ledger_with({1: 0.5, 2: 0.0, 3: -0.2})
    rep = individual_fairness({1: 0.8, 2: 0.8, 3: 0.8}, led, [1, 2, 3])
    assert rep.value == pytest.approx(1.0)
    assert [n for n, _ in rep.excluded] == [2, 3]
    led_all_zero = ledger_with({1: 0.0})
    with pytest.raises(UndefinedMetricError):
        individual_fairness({1: 0.8}, led_all_zero, [1])


@given(st.floats(min_value=1e-3, max_value=1e3))
@settings(max_examples=50, deadline=None)
def test_individual_invariant_under_contribution_rescaling(c):
    base = {1: 0.2, 2: 0.5, 3: 0.9}
    perf = {1: 0.7, 2: 0.6, 3: 0.9}
    a = individual_fairness(perf, ledger_with(base), [1, 2, 3]).value
    b = individual_fairness(
        perf, ledger_with({n: c * s for n, s in base.items()}), [1, 2, 3]).value
    assert a == pytest.approx(b, abs=1e-12)


def test_incentive_hand_case():
    led = ledger_with({1: 0.1, 2: 0.4})
    rep = incentive_fairness({1: 0.5, 2: 0.5}, led, [1, 2])
    # R = (5, 1.25): 6.25^2 / (2 * 26.5625)
    assert rep.value == pytest.approx(6.25**2 / (2 * 26.5625), abs=1e-12)
    assert rep.value == pytest.approx(0.7353, abs=1e-4)


def test_incentive_proportional_and_singleton():
    led = ledger_with({1: 0.1, 2: 0.4})
    assert incentive_fairness({1: 0.2, 2: 0.8}, led, [1, 2]).value == pytest.approx(1.0)
    assert incentive_fairness({2: 0.37}, led, [2]).value == pytest.approx(1.0)


def test_negative_gains_clamped_and_counted():
    led = ledger_with({1: 0.5, 2: 0.5})
    rep = incentive_fairness({1: -0.2, 2: 0.5}, led, [1, 2])
    assert rep.clamped_negative == 1
    assert rep.gains[1] == 0.0
    assert rep.value == pytest.approx(0.5)  # jain([0, 1])


# ---------------------------------------------------------------------------
# Group and orchestrator fairness
# ---------------------------------------------------------------------------

def rec(n, mean_value):
    return EqOddsRecord(client_id=n, per_attribute={0: mean_value})


def test_group_all_parity():
    assert group_fairness([rec(1, 1.0), rec(2, 1.0)]) == pytest.approx(1.0)


def test_group_median_odd_and_even():
    assert group_fairness([rec(1, 0.6), rec(2, 0.8), rec(3, 1.0)]) == pytest.approx(0.8)
    assert group_fairness(
        [rec(1, 0.6), rec(2, 0.8), rec(3, 0.9), rec(4, 1.0)]) == pytest.approx(0.85)


def test_group_drops_clients_without_computable_attributes():
    empty = EqOddsRecord(client_id=9, per_attribute={},
                         skipped_attributes=[(0, "insufficient-group-samples")])
    assert group_fairness([rec(1, 0.7), empty]) == pytest.approx(0.7)
    with pytest.raises(UndefinedMetricError):
        group_fairness([empty])


def test_group_means_attributes_per_client():
    r = EqOddsRecord(client_id=1, per_attribute={0: 0.4, 1: 0.8})
    assert group_fairness([r]) == pytest.approx(0.6)


def test_orchestrator_mean_and_bounds():
    assert orchestrator_fairness({1: 1.0, 2: 1.0}, [1, 2]) == pytest.approx(1.0)
    assert orchestrator_fairness({1: 0.5, 2: 0.7, 3: 0.9}, [1, 2, 3]) == pytest.approx(0.7)
    with pytest.raises(ConfigurationError):
        orchestrator_fairness({1: 1.2}, [1])


def test_orchestrator_untrained_model_near_half():
    from fedfair.numkit import LabeledBatch, RngStream, evaluate, init_params

    gen = np.random.default_rng(99)
    perfs = {}
    for n in range(4):
        feats = gen.uniform(0, 1, size=(500, 4))
        labels = gen.integers(0, 2, size=500)
        batch = LabeledBatch(feats, labels, np.zeros((500, 1), int))
        model = init_params("logistic", 4, 2, RngStream(1000 + n))
        perfs[n] = evaluate(model, batch).accuracy
    f_o = orchestrator_fairness(perfs, list(perfs))
    # labels are independent of features: accuracy is binomial around 0.5
    assert abs(f_o - 0.5) < 2.58 * 0.5 / math.sqrt(4 * 500)


# ---------------------------------------------------------------------------
# General fairness
# ---------------------------------------------------------------------------

def test_general_all_ones():
    assert general_fairness(1, 1, 1, 1, FairnessWeights()) == pytest.approx(1.0)


def test_general_equal_weights_hand_case():
    assert general_fairness(0.8, 0.6, 1.0, 0.6, FairnessWeights()) == pytest.approx(0.75)


def test_general_degenerate_weighting():
    w = FairnessWeights(w_j=1, w_g=0, w_r=0, w_o=0)
    assert general_fairness(0.42, 0.9, 0.1, 0.7, w) == pytest.approx(0.42)


def test_general_undefined_component_raises():
    with pytest.raises(UndefinedMetricError) as exc:
        general_fairness(0.8, None, 0.9, 0.7, FairnessWeights())
    assert "f_g" in str(exc.value)


def test_weights_must_sum_to_one():
    with pytest.raises(ConfigurationError):
        FairnessWeights(0.25, 0.25, 0.25, 0.15)
    with pytest.raises(ConfigurationError):
        FairnessWeights(0.5, 0.5, 0.5, -0.5)


@given(st.lists(st.floats(min_value=0, max_value=1, allow_nan=False),
                min_size=4, max_size=4),
       st.lists(st.floats(min_value=0.01, max_value=1, allow_nan=False),
                min_size=4, max_size=4))
@settings(max_examples=200, deadline=None)
def test_general_composition_matches_dot_product(fs, raw_w):
    total = sum(raw_w)
    w = [x / total for x in raw_w]
    # renormalization can leave a tiny residue; nudge the last weight
    w[3] += 1.0 - sum(w)
    weights = FairnessWeights(*w)
    expected = sum(wi * fi for wi, fi in zip(w, fs))
    assert general_fairness(*fs, weights) == pytest.approx(expected, abs=1e-12)


def test_general_monotone_in_each_component():
    w = FairnessWeights()
    base = general_fairness(0.5, 0.5, 0.5, 0.5, w)
    for bumped in ((0.6, 0.5, 0.5, 0.5), (0.5, 0.6, 0.5, 0.5),
                   (0.5, 0.5, 0.6, 0.5), (0.5, 0.5, 0.5, 0.6)):
        assert general_fairness(*bumped, w) >= base
