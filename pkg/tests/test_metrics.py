import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import count_precision, count_recall
from xrlinear import Prediction, evaluate, precision_at_k, recall_at_k


def test_examples():
    assert precision_at_k([1, 2, 5], {1, 3}, 3) == pytest.approx(1 / 3)
    assert recall_at_k([1, 2, 5], {1, 3}, 3) == 0.5
    assert precision_at_k([4, 7], {4, 7}, 2) == 1.0
    assert recall_at_k([9, 4, 7], {4, 7}, 3) == 1.0


def test_missing_slots_are_misses_and_empty_truth():
    assert precision_at_k([1], {1}, 5) == 0.2
    assert recall_at_k([1, 2], set(), 2) == 0.0
    with pytest.raises(ValueError):
        precision_at_k([1], {1}, 0)


def test_accepts_prediction_objects():
    p = Prediction(np.array([3, 1, 2]), np.array([0.9, 0.5, 0.1]))
    assert precision_at_k(p, {1}, 2) == 0.5


def test_evaluate_report_and_skip_empty():
    preds = [[1, 2, 3], [4, 5, 6], [7, 8, 9]]
    truths = [[1], [], [9, 10]]
    r = evaluate(preds, truths, ks=(1, 3))
    assert r.n_test == 3
    assert r.precision[1] == pytest.approx(1 / 3)
    assert r.recall[3] == pytest.approx((1 + 0 + 0.5) / 3)
    s = evaluate(preds, truths, ks=(1, 3), skip_empty=True)
    assert s.n_test == 2 and s.n_skipped == 1
    assert s.recall[3] == pytest.approx(0.75)
    body = json.loads(s.to_json())
    assert body["precision"]["1"] == 0.5 and body["n_test"] == 2
    assert "Prec@k" in s.to_table()
    with pytest.raises(ValueError):
        evaluate(preds, truths[:2])


def test_perfect_predictions_all_ones():
    truths = [[0, 1, 2, 3, 4], [5, 6, 7, 8, 9]]
    r = evaluate(truths, truths, ks=(1, 3, 5))
    assert all(v == 1.0 for v in r.precision.values())
    assert r.recall[5] == 1.0


def test_counting_oracle_random(rng):
    for _ in range(300):
        pred = rng.choice(30, size=int(rng.integers(0, 12)), replace=False).tolist()
        truth = set(rng.choice(30, size=int(rng.integers(0, 8)), replace=False).tolist())
        for k in (1, 3, 5, 10):
            assert precision_at_k(pred, truth, k) == count_precision(pred, truth, k)
            assert recall_at_k(pred, truth, k) == count_recall(pred, truth, k)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(0, 40), unique=True, max_size=15),
    st.sets(st.integers(0, 40), max_size=10),
)
def test_monotone_and_integral(pred, truth):
    prev_r, prev_kp = -1.0, -1.0
    for k in range(1, 16):
        p, r = precision_at_k(pred, truth, k), recall_at_k(pred, truth, k)
        assert 0 <= p <= 1 and 0 <= r <= 1
        assert r >= prev_r and k * p >= prev_kp - 1e-12
        assert abs(k * p - round(k * p)) < 1e-9
        if truth:
            assert abs(r * len(truth) - round(r * len(truth))) < 1e-9
        prev_r, prev_kp = r, k * p
