import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _oracles import auroc_pairs, ece_by_hand
from ucat.errors import FormatError, UndefinedMetricError
from ucat.evidence import EvidenceProfile
from ucat.metrics import (Condition, EvalReport, OrderingVerdict, PredictionRecord, RecordBatch,
                          accuracy, auroc, count_ties, ece, harmonic_mean, records_from_logits,
                          uncertainty_ordering)


def binary_records(conf, correct):
    return [PredictionRecord(np.array([c, 1 - c]), 0 if ok else 1, 0.0, 0.5, 0.0)
            for c, ok in zip(conf, correct)]


def test_accuracy_examples():
    assert accuracy(binary_records([0.9] * 3, [1, 1, 1])) == 1.0
    assert accuracy(binary_records([0.9] * 3, [0, 0, 0])) == 0.0
    assert accuracy(binary_records([0.9] * 4, [1, 1, 0, 1])) == 0.75
    with pytest.raises(ValueError):
        accuracy([])


def test_ties_count_as_wrong():
    recs = binary_records([0.5, 0.8], [1, 1])
    assert accuracy(recs) == 0.5
    assert count_ties(recs) == 1


def test_record_validation():
    with pytest.raises(ValueError):
        PredictionRecord(np.array([0.5, 0.6]), 0, 0, 0.5, 0)
    with pytest.raises(ValueError):
        PredictionRecord(np.array([0.5, 0.5]), 2, 0, 0.5, 0)
    assert PredictionRecord(np.array([1.0]), 0, 0, 0.5, 0, "adversarial").condition is Condition.ADVERSARIAL


def test_ece_examples():
    assert ece(binary_records([1.0] * 5, [1] * 5)) == 0.0
    assert ece(binary_records([1.0] * 5, [0] * 5)) == 1.0
    recs = binary_records([0.6, 0.7, 0.9, 0.9], [1, 0, 1, 1])
    # one occupied bin (0.5, 1]: accuracy 0.75, mean confidence 0.775
    assert ece(recs, n_bins=2) == pytest.approx(0.025, abs=1e-15)
    assert ece_by_hand([0.6, 0.7, 0.9, 0.9], [1, 0, 1, 1], 2) == pytest.approx(0.025, abs=1e-15)


def test_ece_bin_edges():
    # 0.5 sits in the first of two bins, 0.5 + ulp in the second
    recs = binary_records([0.5, np.nextafter(0.5, 1)], [1, 0])
    conf = [r.probs.max() for r in recs]
    assert ece(recs, 2) == pytest.approx(ece_by_hand(conf, [False, False], 2))


@given(st.lists(st.tuples(st.floats(0.5, 1.0), st.booleans()), min_size=1, max_size=60),
       st.integers(1, 20), st.randoms(use_true_random=False))
def test_ece_matches_hand_binning_and_is_order_free(rows, n_bins, rnd):
    conf, ok = zip(*rows)
    recs = binary_records(conf, ok)
    correct = RecordBatch.from_records(recs).correct()
    conf_eff = [r.probs.max() for r in recs]
    got = ece(recs, n_bins)
    assert got == pytest.approx(ece_by_hand(conf_eff, correct, n_bins), abs=1e-12)
    shuffled = list(recs)
    rnd.shuffle(shuffled)
    assert ece(shuffled, n_bins) == pytest.approx(got, abs=1e-12)
    one = abs(np.mean(correct) - np.mean(conf_eff))
    assert ece(recs, 1) == pytest.approx(one, abs=1e-12)


def test_auroc_examples():
    assert auroc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auroc([0.3] * 5, [0, 1, 0, 1, 1]) == 0.5
    scores, pos = [0.2, 0.2, 0.5, 0.5, 0.9, 0.1], [1, 0, 1, 0, 1, 0]
    assert auroc(scores, pos) == auroc_pairs(scores, pos)
    with pytest.raises(UndefinedMetricError):
        auroc([0.1, 0.2], [1, 1])


@given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=200)
       .filter(lambda r: 0 < sum(p for _, p in r) < len(r)))
def test_auroc_equals_pairwise_oracle(rows):
    scores, pos = zip(*rows)
    assert auroc(np.array(scores, float) / 7, pos) == auroc_pairs(np.array(scores, float) / 7, pos)


@given(st.lists(st.tuples(st.integers(-40, 40), st.booleans()), min_size=2, max_size=80)
       .filter(lambda r: 0 < sum(p for _, p in r) < len(r)))
def test_auroc_invariant_to_increasing_maps(rows):
    # a coarse grid keeps the maps strictly increasing in floating point too
    s, pos = map(np.array, zip(*rows))
    s = s / 8.0
    base = auroc(s, pos)
    assert auroc(np.exp(s), pos) == base
    assert auroc(3.0 * s + 1.0, pos) == base


def test_harmonic_mean_examples():
    assert harmonic_mean(0.5, 0.5) == 0.5
    assert harmonic_mean(0.7, 0.0) == 0.0
    assert harmonic_mean(54.17, 32.20) == pytest.approx(40.39, abs=0.01)
    with pytest.raises(ValueError):
        harmonic_mean(-0.1, 0.5)


def test_mean_inequalities_on_random_pairs():
    a, b = np.random.default_rng(0).uniform(1e-6, 1, (2, 10_000))
    h = np.array([harmonic_mean(x, y) for x, y in zip(a, b)])
    g = np.sqrt(a * b)
    assert np.all(h <= g * (1 + 1e-12))
    assert np.all(g <= (a + b) / 2 * (1 + 1e-12))


def _report(pu_clean, pu_adv):
    return EvalReport(0.9, {"a": 0.5}, 0.1, 0.2, 0.7, 0.6, pu_clean, pu_adv, {"a": 0.64},
                      primary_attack="a",
                      clean={"mean_pu": pu_clean, "mean_pu_correct": pu_clean},
                      per_attack={"a": {"mean_pu": pu_adv, "mean_pu_correct": pu_adv}})


def test_ordering_verdicts():
    v = uncertainty_ordering(_report(0.1, 0.5), _report(0.2, 0.3))
    assert v.holds and v[:3] == (0.1, 0.2, 0.3)
    assert not uncertainty_ordering(_report(0.3, 0.5), _report(0.2, 0.1)).holds
    assert not OrderingVerdict.from_means(0.1, None, 0.3).holds


def test_report_roundtrip_and_versioning():
    r = _report(0.1, 0.2)
    assert EvalReport.from_dict(r.to_dict()) == r
    d = r.to_dict()
    d["version"] = "3.1"
    with pytest.raises(FormatError):
        EvalReport.from_dict(d)
    d = r.to_dict()
    d["surprise"] = 1
    with pytest.raises(FormatError):
        EvalReport.from_dict(d)


def test_records_from_logits():
    logits = np.array([[0.5, -0.5, 0.0], [0.0, 0.0, 0.0]]) / 0.07
    b = records_from_logits(logits, [0, 1], EvidenceProfile(0.07, 0.07))
    np.testing.assert_allclose(b.pu[1], math.log(3))
    np.testing.assert_allclose(b.eu[1], 3 / (3 * math.exp(1 / 0.07) + 3))
    assert list(b.correct()) == [True, False]
