"""Sparse user-item rating storage, CSV ingestion and per-user splitting."""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ContractViolation, DataError, EmptyDatasetError, ParseError, RatingRangeError

Triple = tuple[int, int, int]

MOVIELENS_HEADER = ["userId", "movieId", "rating", "timestamp"]


class RatingMatrix:
    """Immutable user x item matrix of integer ratings in ``1..rating_max``.

    Zero means "unrated" and is never stored. The matrix keeps both a CSR
    (row per user) and a CSC (column per item) copy since neighbour search
    walks both orientations.

    Args:
        num_users: Number of user rows.
        num_items: Number of item columns.
        users, items, ratings: Parallel arrays of entries.
        rating_max: Top of the rating scale.
        user_ids, item_ids: Optional raw identifiers indexed by row/column.
    """

    def __init__(
        self,
        num_users: int,
        num_items: int,
        users: Sequence[int] | np.ndarray,
        items: Sequence[int] | np.ndarray,
        ratings: Sequence[int] | np.ndarray,
        rating_max: int = 5,
        user_ids: Sequence[str] | None = None,
        item_ids: Sequence[str] | None = None,
    ):
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        ratings = np.asarray(ratings)
        if not (users.shape == items.shape == ratings.shape) or users.ndim != 1:
            raise ContractViolation("users, items and ratings must be equal-length 1-D arrays")
        if rating_max < 1:
            raise ContractViolation("rating_max must be >= 1")
        if users.size:
            if users.min() < 0 or users.max() >= num_users:
                raise ContractViolation("user index out of range")
            if items.min() < 0 or items.max() >= num_items:
                raise ContractViolation("item index out of range")
            if np.any(ratings != np.round(ratings)):
                raise ContractViolation("ratings must be integers")
            if ratings.min() < 1 or ratings.max() > rating_max:
                raise ContractViolation(f"ratings must lie in [1, {rating_max}]")
        keys = users * num_items + items
        if np.unique(keys).size != keys.size:
            raise ContractViolation("duplicate (user, item) entry")

        self.num_users = int(num_users)
        self.num_items = int(num_items)
        self.rating_max = int(rating_max)
        coo = sp.coo_matrix(
            (ratings.astype(np.float64), (users, items)), shape=(self.num_users, self.num_items)
        )
        self.csr = coo.tocsr()
        self.csr.sort_indices()
        self.csc = coo.tocsc()
        self.csc.sort_indices()
        for m in (self.csr, self.csc):
            m.data.flags.writeable = False
        self.user_ids = list(user_ids) if user_ids is not None else None
        self.item_ids = list(item_ids) if item_ids is not None else None

    @classmethod
    def from_triples(cls, triples: Iterable[Triple], num_users: int, num_items: int, **kwargs) -> RatingMatrix:
        arr = np.array(list(triples), dtype=np.int64).reshape(-1, 3)
        return cls(num_users, num_items, arr[:, 0], arr[:, 1], arr[:, 2], **kwargs)

    @classmethod
    def from_dense(cls, dense, rating_max: int = 5) -> RatingMatrix:
        dense = np.asarray(dense)
        u, i = np.nonzero(dense)
        return cls(dense.shape[0], dense.shape[1], u, i, dense[u, i], rating_max=rating_max)

    @property
    def nnz(self) -> int:
        return int(self.csr.nnz)

    def __len__(self) -> int:
        return self.nnz

    def __repr__(self) -> str:
        return f"RatingMatrix(users={self.num_users}, items={self.num_items}, ratings={self.nnz}, rating_max={self.rating_max})"

    def get(self, u: int, i: int) -> int:
        """Rating of user ``u`` on item ``i``, 0 when unrated."""
        row = slice(self.csr.indptr[u], self.csr.indptr[u + 1])
        cols = self.csr.indices[row]
        pos = np.searchsorted(cols, i)
        if pos < cols.size and cols[pos] == i:
            return int(self.csr.data[row][pos])
        return 0

    def user_row(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        """(item indices, ratings) rated by user ``u``, items ascending."""
        lo, hi = self.csr.indptr[u], self.csr.indptr[u + 1]
        return self.csr.indices[lo:hi], self.csr.data[lo:hi]

    def item_column(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(user indices, ratings) of raters of item ``i``, users ascending."""
        lo, hi = self.csc.indptr[i], self.csc.indptr[i + 1]
        return self.csc.indices[lo:hi], self.csc.data[lo:hi]

    def user_counts(self) -> np.ndarray:
        return np.diff(self.csr.indptr)

    def item_counts(self) -> np.ndarray:
        return np.diff(self.csc.indptr)

    def user_means(self) -> np.ndarray:
        """Per-user mean rating; NaN for users without ratings."""
        counts = self.user_counts()
        sums = np.asarray(self.csr.sum(axis=1)).ravel()
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)

    def item_means(self) -> np.ndarray:
        """Per-item mean rating; NaN for items without ratings."""
        counts = self.item_counts()
        sums = np.asarray(self.csc.sum(axis=0)).ravel()
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)

    def global_mean(self) -> float:
        if self.nnz == 0:
            raise EmptyDatasetError("rating matrix has no entries")
        return float(self.csr.data.mean())

    def triples(self) -> np.ndarray:
        """All entries as an ``(nnz, 3)`` int array sorted by (user, item)."""
        coo = self.csr.tocoo()
        out = np.column_stack([coo.row, coo.col, coo.data]).astype(np.int64)
        return out[np.lexsort((out[:, 1], out[:, 0]))]

    def entries(self) -> Iterator[Triple]:
        for u, i, r in self.triples():
            yield int(u), int(i), int(r)

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def fingerprint(self) -> str:
        """Content hash of shape, scale and entries (ids excluded)."""
        h = hashlib.sha256()
        h.update(np.array([self.num_users, self.num_items, self.rating_max], dtype=np.int64).tobytes())
        h.update(self.triples().tobytes())
        return h.hexdigest()

    def with_entries(self, triples: np.ndarray) -> RatingMatrix:
        """A matrix over the same users, items and ids holding ``triples``."""
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        return RatingMatrix(
            self.num_users,
            self.num_items,
            triples[:, 0],
            triples[:, 1],
            triples[:, 2],
            rating_max=self.rating_max,
            user_ids=self.user_ids,
            item_ids=self.item_ids,
        )


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _is_rating_header(row: list[str]) -> bool:
    return len(row) >= 3 and row[2].strip().lower() in ("rating", "ratings")


def load_ratings(path, format: str = "generic_csv", rating_max: int = 5) -> RatingMatrix:
    """Read a ``user,item,rating[,timestamp]`` CSV into a :class:`RatingMatrix`.

    Raw user and item identifiers are kept as strings and re-indexed densely
    from 0 in order of first appearance. Fractional ratings are rounded half
    up (MovieLens half stars: 3.5 -> 4, 0.5 -> 1).

    A generic CSV may start with a header row, recognised by a third column
    named ``rating``. ``movielens`` format requires the standard
    ``userId,movieId,rating,timestamp`` header.

    Raises:
        DataError: the file cannot be opened.
        ParseError: a row is malformed or repeats a (user, item) pair.
        RatingRangeError: a rounded rating falls outside ``[1, rating_max]``.
        EmptyDatasetError: no rating rows.
    """
    if format not in ("generic_csv", "movielens"):
        raise ContractViolation(f"unknown dataset format {format!r}")
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc

    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    users, items, ratings = [], [], []
    seen: set[tuple[int, int]] = set()
    with fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if lineno == 1:
                if format == "movielens":
                    if [c.strip() for c in row] != MOVIELENS_HEADER:
                        raise ParseError(f"expected MovieLens header {','.join(MOVIELENS_HEADER)}", line=1)
                    continue
                if _is_rating_header(row):
                    continue
            if len(row) not in (3, 4):
                raise ParseError(f"expected 3 or 4 columns, got {len(row)}", line=lineno)
            raw_user, raw_item, raw_rating = (c.strip() for c in row[:3])
            if not raw_user or not raw_item:
                raise ParseError("empty user or item id", line=lineno)
            try:
                value = float(raw_rating)
            except ValueError:
                raise ParseError(f"rating {raw_rating!r} is not numeric", line=lineno) from None
            if not math.isfinite(value):
                raise ParseError(f"rating {raw_rating!r} is not finite", line=lineno)
            rating = round_half_up(value)
            if not 1 <= rating <= rating_max:
                raise RatingRangeError(f"rating {raw_rating} outside (0, {rating_max}] after rounding", line=lineno)
            u = user_index.setdefault(raw_user, len(user_index))
            i = item_index.setdefault(raw_item, len(item_index))
            if (u, i) in seen:
                raise ParseError(f"duplicate rating for user {raw_user!r}, item {raw_item!r}", line=lineno)
            seen.add((u, i))
            users.append(u)
            items.append(i)
            ratings.append(rating)

    if not ratings:
        raise EmptyDatasetError(f"{path} contains no ratings")
    return RatingMatrix(
        len(user_index),
        len(item_index),
        users,
        items,
        ratings,
        rating_max=rating_max,
        user_ids=list(user_index),
        item_ids=list(item_index),
    )


@dataclass
class DatasetSplit:
    train: RatingMatrix
    test: list[Triple]
    validation: list[Triple] = field(default_factory=list)
    seed: int = 0


def _partition_count(n: int, ratio: float) -> int:
    # Guard against 4 * 0.25 landing on 0.99999... for non-dyadic ratios.
    return int(math.floor(n * ratio + 1e-9))


def split(
    matrix: RatingMatrix,
    train_ratio: float = 0.75,
    validation_ratio: float = 0.0,
    seed: int = 0,
) -> DatasetSplit:
    """Randomly partition each user's ratings into train / validation / test.

    Per user with ``n`` ratings, ``floor(n * (1 - train_ratio))`` go to test
    (so 3:1 sends the remainder to train). ``validation_ratio`` then carves
    ``floor(n_rest * validation_ratio)`` out of what is left. Users with a
    single rating keep it in train.
    """
    if not 0 < train_ratio < 1:
        raise ContractViolation("train_ratio must be in (0, 1)")
    if not 0 <= validation_ratio < 1:
        raise ContractViolation("validation_ratio must be in [0, 1)")
    if matrix.nnz == 0:
        raise EmptyDatasetError("cannot split an empty rating matrix")

    rng = np.random.default_rng(seed)
    triples = matrix.triples()
    starts = matrix.csr.indptr
    train_rows, test_rows, val_rows = [], [], []
    for u in range(matrix.num_users):
        lo, hi = starts[u], starts[u + 1]
        n = hi - lo
        if n == 0:
            continue
        order = lo + rng.permutation(n)
        n_test = _partition_count(n, 1.0 - train_ratio) if n > 1 else 0
        n_val = _partition_count(n - n_test, validation_ratio) if n - n_test > 1 else 0
        test_rows.append(order[:n_test])
        val_rows.append(order[n_test : n_test + n_val])
        train_rows.append(order[n_test + n_val :])

    def gather(chunks):
        idx = np.sort(np.concatenate(chunks)) if chunks else np.empty(0, dtype=np.int64)
        return triples[idx]

    def as_list(arr):
        return [(int(u), int(i), int(r)) for u, i, r in arr]

    return DatasetSplit(
        train=matrix.with_entries(gather(train_rows)),
        test=as_list(gather(test_rows)),
        validation=as_list(gather(val_rows)),
        seed=seed,
    )
