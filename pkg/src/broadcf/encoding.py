"""Model inputs and targets: rating collaborative vectors and one-hot ratings."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, EmptyDatasetError
from .neighbors import NeighborIndex, knu_matrix, lni_matrix
from .ratings import RatingMatrix


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Aligned model inputs ``X`` (|D| x (k+l)), targets ``Y`` (|D| x d_y) and pairs."""

    X: np.ndarray
    Y: np.ndarray
    pairs: np.ndarray

    def __len__(self) -> int:
        return self.X.shape[0]

    def ratings(self) -> np.ndarray:
        """Decode the targets back to integer ratings."""
        return np.argmax(self.Y, axis=1) + 1

    def to_csv(self, path) -> None:
        """Write ``user,item,x_1..x_{k+l},y_1..y_{d_y}`` rows for offline checks."""
        nx, ny = self.X.shape[1], self.Y.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["user", "item", *(f"x{j}" for j in range(1, nx + 1)), *(f"y{j}" for j in range(1, ny + 1))])
            for (u, i), x, y in zip(self.pairs.tolist(), self.X.tolist(), self.Y.astype(int).tolist()):
                w.writerow([u, i, *(repr(v) for v in x), *y])


def collaborative_matrix(
    train: RatingMatrix, index: NeighborIndex, users, items, holdout: bool = False
) -> np.ndarray:
    """Stack ``[filled KNU | filled LNI]`` rows for many pairs, shape ``(P, k+l)``."""
    return np.hstack(
        [knu_matrix(train, index, users, items, holdout), lni_matrix(train, index, users, items, holdout)]
    )


def collaborative_vector(train: RatingMatrix, index: NeighborIndex, u: int, i: int) -> np.ndarray:
    return collaborative_matrix(train, index, [u], [i])[0]


def one_hot(r: int, d_y: int) -> np.ndarray:
    """Length-``d_y`` indicator with a 1 at (1-based) position ``r``."""
    if int(r) != r or not 1 <= r <= d_y:
        raise ContractViolation(f"rating {r} outside [1, {d_y}]")
    out = np.zeros(d_y)
    out[int(r) - 1] = 1.0
    return out


def one_hot_matrix(ratings, d_y: int) -> np.ndarray:
    ratings = np.asarray(ratings)
    if ratings.size and (np.any(ratings != np.round(ratings)) or ratings.min() < 1 or ratings.max() > d_y):
        raise ContractViolation(f"ratings must be integers in [1, {d_y}]")
    out = np.zeros((ratings.size, d_y))
    out[np.arange(ratings.size), ratings.astype(np.int64) - 1] = 1.0
    return out


def build_training_set(train: RatingMatrix, index: NeighborIndex, holdout: bool = False) -> TrainingSet:
    """One ``(x, y)`` row per stored training rating, ordered by (user, item).

    ``holdout`` keeps each row's own rating out of its fill values; see
    :func:`broadcf.neighbors.knu_matrix`.
    """
    if train.nnz == 0:
        raise EmptyDatasetError("training matrix is empty")
    triples = train.triples()
    X = collaborative_matrix(train, index, triples[:, 0], triples[:, 1], holdout)
    Y = one_hot_matrix(triples[:, 2], train.rating_max)
    return TrainingSet(X=X, Y=Y, pairs=triples[:, :2].copy())
