"""Rating decoding, error metrics and evaluation reports."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractViolation, EmptyDatasetError
from .ratings import RatingMatrix

DECODE_MODES = ("index_weighted", "literal")
TIMING_FIELDS = ("preprocess_seconds", "solve_seconds", "train_seconds", "test_seconds")


def decode_ratings(Y_hat, mode: str = "index_weighted") -> np.ndarray:
    """Turn rating strength rows into real-valued ratings.

    Both modes weight each position by ``(y_j - min) / (max - min)``.
    ``literal`` sums ``weight_j * y_j``. ``index_weighted`` normalises the
    weights to sum to one and returns the expected rating index
    ``sum_j w_j * j`` (1-based), which always lies in ``[1, d_y]``. A flat row
    (max == min) decodes to the scale midpoint ``(d_y + 1) / 2``.
    """
    if mode not in DECODE_MODES:
        raise ContractViolation(f"unknown decode mode {mode!r}")
    Y_hat = np.atleast_2d(np.asarray(Y_hat, dtype=np.float64))
    d_y = Y_hat.shape[1]
    if d_y < 2:
        raise ContractViolation("strength vectors need at least 2 entries")
    if np.isnan(Y_hat).any():
        raise ContractViolation("strength vector contains NaN")
    lo = Y_hat.min(axis=1, keepdims=True)
    hi = Y_hat.max(axis=1, keepdims=True)
    shifted = Y_hat - lo
    flat = (hi == lo).ravel()
    out = np.full(Y_hat.shape[0], (d_y + 1) / 2.0)
    live = ~flat
    if mode == "literal":
        out[live] = ((shifted[live] / (hi[live] - lo[live])) * Y_hat[live]).sum(axis=1)
    else:
        w = shifted[live] / shifted[live].sum(axis=1, keepdims=True)
        # Row-wise sum keeps batch and single-row results bit-identical.
        out[live] = (w * np.arange(1, d_y + 1, dtype=np.float64)).sum(axis=1)
    return out


def decode_rating(y_hat, mode: str = "index_weighted") -> float:
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y_hat.ndim != 1:
        raise ContractViolation("decode_rating takes a single strength vector")
    return float(decode_ratings(y_hat[None, :], mode)[0])


def _errors(truth, pred) -> np.ndarray:
    truth = np.asarray(truth, dtype=np.float64).ravel()
    pred = np.asarray(pred, dtype=np.float64).ravel()
    if truth.shape != pred.shape:
        raise ContractViolation("truth and prediction lengths differ")
    if truth.size == 0:
        raise EmptyDatasetError("no predictions to score")
    return truth - pred


def rmse(truth, pred) -> float:
    return float(math.sqrt(np.mean(_errors(truth, pred) ** 2)))


def mae(truth, pred) -> float:
    return float(np.mean(np.abs(_errors(truth, pred))))


def improvement_percent(baseline: float, result: float) -> float:
    """Relative error reduction of ``result`` over ``baseline``, in percent."""
    if not baseline > 0:
        raise ContractViolation("baseline metric must be > 0")
    return (baseline - result) / baseline * 100.0


@dataclass
class EvalReport:
    rmse: float
    mae: float
    n_test: int
    trainable_params: int
    preprocess_seconds: float = 0.0
    solve_seconds: float = 0.0
    train_seconds: float = 0.0
    test_seconds: float = 0.0
    config: dict = field(default_factory=dict)

    def as_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            for key in TIMING_FIELDS:
                d.pop(key)
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.as_dict(timing), sort_keys=True, separators=(",", ":"))

    def csv_header(self, timing: bool = True) -> list[str]:
        return [key for key in self.as_dict(timing) if key != "config"] + sorted(self.config)

    def csv_row(self, timing: bool = True) -> list:
        d = self.as_dict(timing)
        return [d[key] for key in d if key != "config"] + [self.config[key] for key in sorted(self.config)]

    def to_csv(self, header: bool = True, timing: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(self.csv_header(timing))
        w.writerow(self.csv_row(timing))
        return buf.getvalue()


def _split_triples(pairs: Sequence[tuple[int, int, int]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 3)
    if arr.shape[0] == 0:
        raise EmptyDatasetError("test set is empty")
    return arr[:, 0], arr[:, 1], arr[:, 2]


def evaluate(recommender, test: Sequence[tuple[int, int, int]], decode_mode: str | None = None) -> EvalReport:
    """Score a fitted :class:`~broadcf.recommender.BroadCF` on ``(user, item, rating)`` triples.

    Inputs are assembled from the recommender's training matrix only; the
    held-out ratings are read solely to compute the errors.
    """
    users, items, truth = _split_triples(test)
    start = time.perf_counter()
    pred = recommender.predict(users, items, decode_mode=decode_mode)
    elapsed = time.perf_counter() - start
    timings = recommender.timings_
    config = recommender.config()
    if decode_mode is not None:
        config["decode_mode"] = decode_mode
    return EvalReport(
        rmse=rmse(truth, pred),
        mae=mae(truth, pred),
        n_test=int(truth.size),
        trainable_params=recommender.trainable_params,
        preprocess_seconds=timings.get("preprocess", 0.0),
        solve_seconds=timings.get("solve", 0.0),
        train_seconds=timings.get("preprocess", 0.0) + timings.get("solve", 0.0),
        test_seconds=elapsed,
        config=config,
    )


def user_mean_predictions(train: RatingMatrix, users) -> np.ndarray:
    users = np.asarray(users, dtype=np.int64)
    means = train.user_means()
    known = (users >= 0) & (users < train.num_users)
    out = np.full(users.shape, train.global_mean())
    vals = means[users[known]]
    out[known] = np.where(np.isnan(vals), out[known], vals)
    return out


def user_mean_baseline(train: RatingMatrix, test: Sequence[tuple[int, int, int]]) -> EvalReport:
    """Predict each held-out rating by the user's training mean (global mean if none)."""
    if train.nnz == 0:
        raise EmptyDatasetError("training matrix is empty")
    users, _, truth = _split_triples(test)
    start = time.perf_counter()
    means = train.user_means()
    fit_time = time.perf_counter() - start
    start = time.perf_counter()
    pred = user_mean_predictions(train, users)
    test_time = time.perf_counter() - start
    return EvalReport(
        rmse=rmse(truth, pred),
        mae=mae(truth, pred),
        n_test=int(truth.size),
        trainable_params=int(np.count_nonzero(~np.isnan(means))) + 1,
        solve_seconds=fit_time,
        train_seconds=fit_time,
        test_seconds=test_time,
        config={"model": "user_mean"},
    )
