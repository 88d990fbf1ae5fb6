"""Nearest-user / nearest-item search and neighbour rating vectors.

Similarity is plain cosine over zero-filled rating vectors. Ratings are small
integers, so every dot product and squared norm is exact in float64 and a
cosine is always evaluated as ``dot / sqrt(norm_a * norm_b)``; the same inputs
therefore give bit-identical similarities whatever path computed them, which
keeps the "ties by ascending id" rule stable. Each vector is first divided by
the gcd of its entries. That leaves the cosine unchanged but makes a uniformly
rescaled matrix produce bit-identical similarities, so neighbour orderings are
exactly invariant to rating scale.

The fill rule for an unrated neighbour entry is a chain:

1. the rating given by the rater (or rated item) most similar to the
   neighbour, ties to the lowest id;
2. the neighbour's own mean rating when no such rater exists;
3. the global training mean when the neighbour has no ratings either.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ContractViolation, EmptyDatasetError
from .ratings import RatingMatrix

COLD = -1
"""Index sentinel for a user or item unknown to the training matrix."""

_CHUNK = 512


def _gcd_reduce(v: np.ndarray) -> np.ndarray:
    if v.size and np.all(v == np.round(v)) and np.abs(v).max() < 2**53:
        g = np.gcd.reduce(v.astype(np.int64))
        if g > 1:
            return v / g
    return v


def _gcd_reduce_rows(mat: sp.csr_matrix) -> sp.csr_matrix:
    mat = sp.csr_matrix(mat, dtype=np.float64, copy=True)
    mat.sort_indices()
    lens = np.diff(mat.indptr)
    live = np.flatnonzero(lens)
    if live.size:
        g = np.gcd.reduceat(np.abs(mat.data.astype(np.int64)), mat.indptr[live])
        mat.data /= np.repeat(g, lens[live]).astype(np.float64)
    return mat


def cosine_similarity(a, b) -> float:
    """Cosine of two rating vectors (dense or 1-row sparse); 0 if either is all zero."""
    a = a.toarray().ravel() if sp.issparse(a) else np.asarray(a, dtype=np.float64).ravel()
    b = b.toarray().ravel() if sp.issparse(b) else np.asarray(b, dtype=np.float64).ravel()
    a, b = _gcd_reduce(a.astype(np.float64)), _gcd_reduce(b.astype(np.float64))
    if a.shape != b.shape:
        raise ContractViolation(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na, nb = float(a @ a), float(b @ b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(float(a @ b) / np.sqrt(na * nb), -1.0, 1.0))


class _Side:
    """Cosine machinery for one orientation (rows of ``mat`` are the entities)."""

    def __init__(self, mat: sp.csr_matrix, dense_limit: int):
        self.mat = _gcd_reduce_rows(mat)
        self.n = mat.shape[0]
        self.norm2 = np.asarray(self.mat.multiply(self.mat).sum(axis=1), dtype=np.float64).ravel()
        self.dense = self._compute(np.arange(self.n), None) if self.n <= dense_limit else None
        self._rankings: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._lock = threading.Lock()

    def _compute(self, a: np.ndarray, b: np.ndarray | None) -> np.ndarray:
        rhs = self.mat if b is None else self.mat[b]
        nb = self.norm2 if b is None else self.norm2[b]
        dots = (self.mat[a] @ rhs.T).toarray()
        denom = np.sqrt(self.norm2[a][:, None] * nb[None, :])
        with np.errstate(invalid="ignore", divide="ignore"):
            sims = np.where(denom > 0, dots / denom, 0.0)
        return np.clip(sims, -1.0, 1.0)

    def block(self, a, b=None) -> np.ndarray:
        """Similarities between entities ``a`` (rows) and ``b`` (columns, default all)."""
        a = np.asarray(a, dtype=np.int64)
        if self.dense is not None:
            return self.dense[a] if b is None else self.dense[np.ix_(a, np.asarray(b, dtype=np.int64))]
        return self._compute(a, None if b is None else np.asarray(b, dtype=np.int64))

    def top(self, k: int, threads: int | None) -> tuple[np.ndarray, np.ndarray]:
        ids = np.empty((self.n, k), dtype=np.int64)
        sims = np.empty((self.n, k), dtype=np.float64)

        def work(lo):
            rows = np.arange(lo, min(lo + _CHUNK, self.n))
            block = self.block(rows).copy()
            block[np.arange(rows.size), rows] = -np.inf
            kth = -np.partition(-block, k - 1, axis=1)[:, k - 1]
            for r, row in enumerate(rows):
                cand = np.flatnonzero(block[r] >= kth[r])
                order = cand[np.lexsort((cand, -block[r, cand]))][:k]
                ids[row] = order
                sims[row] = block[r, order]

        starts = range(0, self.n, _CHUNK)
        if threads and threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(work, starts))
        else:
            for lo in starts:
                work(lo)
        return ids, sims

    def ranking(self, a: int) -> tuple[np.ndarray, np.ndarray]:
        with self._lock:
            hit = self._rankings.get(a)
        if hit is not None:
            return hit
        sims = self.block([a])[0]
        others = np.delete(np.arange(self.n), a)
        order = others[np.lexsort((others, -sims[others]))]
        result = (order, sims[order])
        for arr in result:
            arr.flags.writeable = False
        with self._lock:
            self._rankings.setdefault(a, result)
        return result


@dataclass(eq=False)
class NeighborIndex:
    """Ranked cosine neighbours of every user and item of a training matrix.

    ``user_topk``/``item_topl`` hold the ``k`` (``l``) nearest ids per row,
    most similar first, ties by ascending id. Full rankings are computed on
    demand via :meth:`user_neighbors` / :meth:`item_neighbors` and cached;
    the top lists are their prefixes.
    """

    k: int
    l: int
    user_topk: np.ndarray
    user_topk_sim: np.ndarray
    item_topl: np.ndarray
    item_topl_sim: np.ndarray
    users: _Side = field(repr=False)
    items: _Side = field(repr=False)

    def user_neighbors(self, u: int) -> list[tuple[int, float]]:
        ids, sims = self.users.ranking(u)
        return list(zip(ids.tolist(), sims.tolist()))

    def item_neighbors(self, i: int) -> list[tuple[int, float]]:
        ids, sims = self.items.ranking(i)
        return list(zip(ids.tolist(), sims.tolist()))

    def knu(self, users: np.ndarray) -> np.ndarray:
        """Top-k neighbour ids for ``users``; cold users get ids ``0..k-1``."""
        users = np.asarray(users, dtype=np.int64)
        out = self.user_topk[np.where(users == COLD, 0, users)]
        out[users == COLD] = np.arange(self.k)
        return out

    def lni(self, items: np.ndarray) -> np.ndarray:
        items = np.asarray(items, dtype=np.int64)
        out = self.item_topl[np.where(items == COLD, 0, items)]
        out[items == COLD] = np.arange(self.l)
        return out


def build_index(
    train: RatingMatrix,
    k: int,
    l: int,
    threads: int | None = None,
    dense_limit: int = 4096,
) -> NeighborIndex:
    """Cosine top-``k`` users and top-``l`` items over ``train``.

    Args:
        train: Training ratings; similarity never sees held-out data.
        k, l: Neighbourhood sizes, ``1 <= k < num_users``, ``1 <= l < num_items``.
        threads: Worker cap for the ranking pass.
        dense_limit: Orientations with at most this many entities keep a
            dense similarity matrix; larger ones compute blocks on demand.
    """
    if not 1 <= k < train.num_users:
        raise ConfigError(f"k must satisfy 1 <= k < num_users ({train.num_users}), got {k}")
    if not 1 <= l < train.num_items:
        raise ConfigError(f"l must satisfy 1 <= l < num_items ({train.num_items}), got {l}")
    users = _Side(train.csr, dense_limit)
    items = _Side(train.csc.T.tocsr(), dense_limit)
    u_ids, u_sims = users.top(k, threads)
    i_ids, i_sims = items.top(l, threads)
    for arr in (u_ids, u_sims, i_ids, i_sims):
        arr.flags.writeable = False
    return NeighborIndex(k, l, u_ids, u_sims, i_ids, i_sims, users, items)


def _lookup(train: RatingMatrix, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Vectorised ``R[rows, cols]`` with 0 for unrated or cold coordinates."""
    out = np.zeros(rows.shape, dtype=np.float64)
    ok = (rows != COLD) & (cols != COLD)
    if ok.any():
        out[ok] = np.asarray(train.csr[rows[ok], cols[ok]]).ravel()
    return out


def _check_pairs(train: RatingMatrix, users, items) -> tuple[np.ndarray, np.ndarray]:
    users = np.atleast_1d(np.asarray(users, dtype=np.int64))
    items = np.atleast_1d(np.asarray(items, dtype=np.int64))
    if users.shape != items.shape or users.ndim != 1:
        raise ContractViolation("users and items must be equal-length 1-D arrays")
    if np.any((users < COLD) | (users >= train.num_users)):
        raise ContractViolation("user index out of range")
    if np.any((items < COLD) | (items >= train.num_items)):
        raise ContractViolation("item index out of range")
    if train.nnz == 0:
        raise EmptyDatasetError("training matrix is empty")
    return users, items


def _mean_or_global(means: np.ndarray, idx: np.ndarray, global_mean: float) -> np.ndarray:
    vals = means[idx]
    return np.where(np.isnan(vals), global_mean, vals)


def knu_matrix(train: RatingMatrix, index: NeighborIndex, users, items, holdout: bool = False) -> np.ndarray:
    """Filled KNU rating vectors for many (user, item) pairs, shape ``(P, k)``.

    Entry ``j`` of row ``p`` is the rating of user ``p``'s ``j``-th nearest
    user on the row's item, filled by the chain in the module docstring.

    With ``holdout`` the row's own user is not eligible as a filler, so a
    training pair never sees its own target rating.
    """
    users, items = _check_pairs(train, users, items)
    nbrs = index.knu(users)
    out = _lookup(train, nbrs, np.broadcast_to(items[:, None], nbrs.shape))
    miss_p, miss_j = np.nonzero(out == 0)
    if miss_p.size == 0:
        return out
    means = train.user_means()
    gmean = train.global_mean()
    miss_items = items[miss_p]
    miss_nbrs = nbrs[miss_p, miss_j]
    order = np.argsort(miss_items, kind="stable")
    bounds = np.flatnonzero(np.diff(miss_items[order])) + 1
    for grp in np.split(order, bounds):
        i = miss_items[grp[0]]
        raters, ratings = train.item_column(i) if i != COLD else (np.empty(0, np.int64), np.empty(0))
        vs = miss_nbrs[grp]
        if raters.size == 0:
            out[miss_p[grp], miss_j[grp]] = _mean_or_global(means, vs, gmean)
            continue
        sims = index.users.block(vs, raters)
        if holdout:
            own = users[miss_p[grp]][:, None] == raters[None, :]
            sims = np.where(own, -np.inf, sims)
        best = np.argmax(sims, axis=1)
        vals = ratings[best]
        if holdout:
            none_left = np.isneginf(sims[np.arange(len(grp)), best])
            vals = np.where(none_left, _mean_or_global(means, vs, gmean), vals)
        out[miss_p[grp], miss_j[grp]] = vals
    return out


def lni_matrix(train: RatingMatrix, index: NeighborIndex, users, items, holdout: bool = False) -> np.ndarray:
    """Filled LNI rating vectors for many pairs, shape ``(P, l)``.

    Mirror of :func:`knu_matrix`: entry ``j`` is the user's rating of the
    item's ``j``-th nearest item, filled from the user's rated item most
    similar to that neighbour, else the neighbour item's mean, else the
    global mean.
    """
    users, items = _check_pairs(train, users, items)
    nbrs = index.lni(items)
    out = _lookup(train, np.broadcast_to(users[:, None], nbrs.shape), nbrs)
    miss_p, miss_j = np.nonzero(out == 0)
    if miss_p.size == 0:
        return out
    means = train.item_means()
    gmean = train.global_mean()
    miss_users = users[miss_p]
    miss_nbrs = nbrs[miss_p, miss_j]
    order = np.argsort(miss_users, kind="stable")
    bounds = np.flatnonzero(np.diff(miss_users[order])) + 1
    for grp in np.split(order, bounds):
        u = miss_users[grp[0]]
        rated, ratings = train.user_row(u) if u != COLD else (np.empty(0, np.int64), np.empty(0))
        ts = miss_nbrs[grp]
        if rated.size == 0:
            out[miss_p[grp], miss_j[grp]] = _mean_or_global(means, ts, gmean)
            continue
        sims = index.items.block(ts, rated)
        if holdout:
            own = items[miss_p[grp]][:, None] == rated[None, :]
            sims = np.where(own, -np.inf, sims)
        best = np.argmax(sims, axis=1)
        vals = ratings[best]
        if holdout:
            none_left = np.isneginf(sims[np.arange(len(grp)), best])
            vals = np.where(none_left, _mean_or_global(means, ts, gmean), vals)
        out[miss_p[grp], miss_j[grp]] = vals
    return out


def knu_rating_vector(train: RatingMatrix, index: NeighborIndex, u: int, i: int) -> np.ndarray:
    """Filled KNU rating vector (length ``k``) of user ``u`` on item ``i``."""
    return knu_matrix(train, index, [u], [i])[0]


def lni_rating_vector(train: RatingMatrix, index: NeighborIndex, u: int, i: int) -> np.ndarray:
    """Filled LNI rating vector (length ``l``) of item ``i`` from user ``u``."""
    return lni_matrix(train, index, [u], [i])[0]
