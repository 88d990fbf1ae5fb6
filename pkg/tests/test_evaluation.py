import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from broadcf import (
    BroadCF,
    ContractViolation,
    EmptyDatasetError,
    RatingMatrix,
    evaluate,
    improvement_percent,
    mae,
    rmse,
    split,
    user_mean_baseline,
)
from broadcf.evaluation import EvalReport, decode_rating, decode_ratings
from helpers import latent_ratings


@pytest.mark.parametrize(
    "y,mode,expected",
    [
        ((0, 0, 0, 0, 1), "literal", 1.0),
        ((0, 0, 0, 0, 1), "index_weighted", 5.0),
        ((1, 0, 0, 0, 0), "index_weighted", 1.0),
        ((0.2,) * 5, "index_weighted", 3.0),
        ((0.2,) * 5, "literal", 3.0),
        ((0.1, 0.2, 0.4, 0.2, 0.1), "index_weighted", 3.0),
        ((0.1, 0.2, 0.4, 0.2, 0.1), "literal", 0.2 / 3 + 0.4 + 0.2 / 3),
    ],
)
def test_decode_examples(y, mode, expected):
    assert decode_rating(y, mode) == pytest.approx(expected, abs=1e-12)


def test_decode_rejects_bad_input():
    with pytest.raises(ContractViolation):
        decode_rating((1, 0), "argmax")
    with pytest.raises(ContractViolation):
        decode_rating((np.nan, 1, 0))
    with pytest.raises(ContractViolation):
        decode_rating(np.ones((2, 5)))


# A 1e-3 grid keeps row spreads well above the rounding error of a shift.
grid = st.integers(-10_000, 10_000).map(lambda v: v / 1000)
finite_rows = arrays(np.float64, (6, 5), elements=grid)


@settings(max_examples=60, deadline=None)
@given(Y=finite_rows, shift=grid)
def test_index_weighted_range_and_shift_invariance(Y, shift):
    out = decode_ratings(Y, "index_weighted")
    assert np.all((out >= 1 - 1e-12) & (out <= 5 + 1e-12))
    np.testing.assert_allclose(decode_ratings(Y + shift, "index_weighted"), out, atol=1e-6)
    np.testing.assert_allclose(decode_ratings(Y * 3.0, "index_weighted"), out, atol=1e-9)


def test_literal_is_not_shift_invariant():
    assert decode_rating((0, 1), "literal") == 1.0
    assert decode_rating((1, 2), "literal") == 2.0


def test_batch_decode_matches_single():
    Y = np.random.default_rng(0).normal(size=(20, 5))
    for mode in ("index_weighted", "literal"):
        assert decode_ratings(Y, mode).tolist() == [decode_rating(y, mode) for y in Y]


def test_metrics_examples():
    assert mae([1, 3], [2, 5]) == pytest.approx(1.5)
    assert rmse([1, 3], [2, 5]) == pytest.approx(math.sqrt(2.5))
    assert rmse([4], [3.5]) == pytest.approx(0.5) and mae([4], [3.5]) == pytest.approx(0.5)
    with pytest.raises(EmptyDatasetError):
        rmse([], [])
    with pytest.raises(ContractViolation):
        mae([1, 2], [1])


@settings(max_examples=40, deadline=None)
@given(data=st.lists(st.tuples(st.integers(1, 5), st.floats(0, 6)), min_size=1, max_size=40))
def test_rmse_bounds_mae(data):
    truth, pred = zip(*data)
    assert mae(truth, pred) <= rmse(truth, pred) + 1e-12


def test_improvement_percent():
    assert improvement_percent(1.0016, 0.7982) == pytest.approx(20.3075, abs=1e-3)
    assert improvement_percent(0.9, 0.9) == 0
    assert improvement_percent(2, 1) == 50
    for bad in (0, -1):
        with pytest.raises(ContractViolation):
            improvement_percent(bad, 0.5)


def test_user_mean_baseline_example():
    train = RatingMatrix.from_dense([[4, 2, 0], [5, 0, 0], [0, 0, 0]])
    report = user_mean_baseline(train, [(0, 2, 3), (1, 1, 3), (2, 0, 1)])
    preds = [3.0, 5.0, 11 / 3]
    assert report.mae == pytest.approx(np.mean(np.abs(np.subtract([3, 3, 1], preds))))
    assert report.n_test == 3 and report.trainable_params == 3


@pytest.fixture(scope="module")
def small_fit():
    s = split(latent_ratings(n_users=60, n_items=70, density=0.3, seed=1), seed=0)
    rec = BroadCF(k=3, l=3, n=4, d_z=4, m=3, d_h=5, lam=1e-3, seed=2).fit(s.train)
    return rec, s


def test_evaluate_is_deterministic(small_fit):
    rec, s = small_fit
    a, b = evaluate(rec, s.test), evaluate(rec, s.test)
    assert a.to_json(timing=False) == b.to_json(timing=False)
    assert a.n_test == len(s.test) and a.trainable_params == (16 + 15) * 5


def test_evaluate_equals_manual_scoring(small_fit):
    rec, s = small_fit
    u, i, r = np.array(s.test).T
    pred = rec.predict(u, i)
    report = evaluate(rec, s.test)
    assert report.rmse == rmse(r, pred) and report.mae == mae(r, pred)
    literal = evaluate(rec, s.test, decode_mode="literal")
    assert literal.config["decode_mode"] == "literal"


def test_report_serialisation(small_fit):
    rec, s = small_fit
    report = evaluate(rec, s.test)
    d = json.loads(report.to_json(timing=False))
    assert "train_seconds" not in d and d["config"]["k"] == 3
    assert "test_seconds" in json.loads(report.to_json())
    lines = report.to_csv(timing=False).splitlines()
    assert len(lines) == 2 and lines[0].startswith("rmse,mae,n_test,trainable_params,")
    assert report.to_csv(header=False, timing=False) == lines[1] + "\n"


def test_report_timing_fields():
    rep = EvalReport(1.0, 0.5, 3, 10, 1.0, 2.0, 3.0, 4.0, {"k": 1})
    assert rep.csv_header() == [
        "rmse", "mae", "n_test", "trainable_params",
        "preprocess_seconds", "solve_seconds", "train_seconds", "test_seconds", "k",
    ]
    assert rep.csv_row(timing=False) == [1.0, 0.5, 3, 10, 1]
