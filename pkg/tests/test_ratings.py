import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from broadcf import (
    ContractViolation,
    DataError,
    EmptyDatasetError,
    ParseError,
    RatingMatrix,
    RatingRangeError,
    load_ratings,
    split,
)
from broadcf.ratings import round_half_up
from helpers import latent_ratings


def _write(tmp_path, text, name="r.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_two_rows(tmp_path):
    m = load_ratings(_write(tmp_path, "7,42,5.0\n7,43,3.0\n"))
    assert (m.num_users, m.num_items) == (1, 2)
    assert list(m.entries()) == [(0, 0, 5), (0, 1, 3)]
    assert m.user_ids == ["7"] and m.item_ids == ["42", "43"]


def test_generic_header_and_timestamp_column(tmp_path):
    m = load_ratings(_write(tmp_path, "user,item,rating,ts\na,x,4,99\nb,x,2,100\n"))
    assert (m.num_users, m.num_items, m.nnz) == (2, 1, 2)


def test_non_numeric_rating_names_line_1(tmp_path):
    with pytest.raises(ParseError, match="line 1") as info:
        load_ratings(_write(tmp_path, "a,b,x\n"))
    assert info.value.line == 1


def test_malformed_row_line_number(tmp_path):
    with pytest.raises(ParseError, match="line 3"):
        load_ratings(_write(tmp_path, "user,item,rating\n1,2,3\n1,2\n"))


def test_duplicate_pair_rejected(tmp_path):
    with pytest.raises(ParseError, match="line 2"):
        load_ratings(_write(tmp_path, "1,2,3\n1,2,4\n"))


def test_empty_file(tmp_path):
    with pytest.raises(EmptyDatasetError):
        load_ratings(_write(tmp_path, ""))
    with pytest.raises(EmptyDatasetError):
        load_ratings(_write(tmp_path, "userId,movieId,rating,timestamp\n"), "movielens")


def test_missing_file_is_data_error(tmp_path):
    with pytest.raises(DataError):
        load_ratings(tmp_path / "nope.csv")


@pytest.mark.parametrize("value", ["0.4", "5.5", "-1", "7"])
def test_out_of_range(tmp_path, value):
    with pytest.raises(RatingRangeError, match="line 1"):
        load_ratings(_write(tmp_path, f"1,2,{value}\n"))


def test_half_stars_round_half_up(tmp_path):
    m = load_ratings(_write(tmp_path, "1,a,0.5\n1,b,2.5\n1,c,3.5\n1,d,4.5\n1,e,4.4\n"))
    assert [r for _, _, r in m.entries()] == [1, 3, 4, 5, 4]
    assert round_half_up(2.5) == 3 and round_half_up(2.49) == 2


def test_movielens_header_required(tmp_path):
    with pytest.raises(ParseError, match="header"):
        load_ratings(_write(tmp_path, "1,2,3,4\n"), "movielens")
    m = load_ratings(_write(tmp_path, "userId,movieId,rating,timestamp\n1,31,2.5,1260759144\n"), "movielens")
    assert list(m.entries()) == [(0, 0, 3)]


def test_round_trip_and_reindex_bijection(tmp_path):
    rng = np.random.default_rng(3)
    rows, seen = [], set()
    while len(rows) < 60:
        u, i = int(rng.integers(100, 130)), int(rng.integers(5000, 5040))
        if (u, i) not in seen:
            seen.add((u, i))
            rows.append((u, i, int(rng.integers(1, 6))))
    p = _write(tmp_path, "".join(f"{u},{i},{r}.0\n" for u, i, r in rows))
    m = load_ratings(p)
    back = {(int(m.user_ids[u]), int(m.item_ids[i]), r) for u, i, r in m.entries()}
    assert back == set(rows)
    assert len(set(m.user_ids)) == m.num_users == len({u for u, _, _ in rows})
    assert len(set(m.item_ids)) == m.num_items == len({i for _, i, _ in rows})


def test_matrix_invariants_enforced():
    with pytest.raises(ContractViolation):
        RatingMatrix(2, 2, [0], [0], [6])
    with pytest.raises(ContractViolation):
        RatingMatrix(2, 2, [0], [2], [3])
    with pytest.raises(ContractViolation):
        RatingMatrix(2, 2, [0, 0], [1, 1], [3, 4])


def test_matrix_accessors():
    m = RatingMatrix.from_dense([[5, 0, 3], [0, 0, 0], [1, 2, 0]])
    assert m.get(0, 2) == 3 and m.get(1, 1) == 0
    items, ratings = m.user_row(2)
    assert items.tolist() == [0, 1] and ratings.tolist() == [1, 2]
    users, _ = m.item_column(0)
    assert users.tolist() == [0, 2]
    assert np.isnan(m.user_means()[1]) and m.user_means()[0] == 4
    assert m.global_mean() == pytest.approx(11 / 4)


@pytest.mark.parametrize(
    "n,expected",
    [(4, (3, 1)), (1, (1, 0)), (5, (4, 1)), (8, (6, 2)), (7, (6, 1))],
)
def test_split_counts(n, expected):
    m = RatingMatrix.from_dense([[3] * n])
    s = split(m, 0.75, 0.0, seed=1)
    assert (s.train.nnz, len(s.test)) == expected


def test_split_validation_quarter_of_train():
    m = RatingMatrix.from_dense([[4] * 16])
    s = split(m, 0.75, 0.25, seed=0)
    assert (s.train.nnz, len(s.validation), len(s.test)) == (9, 3, 4)


def test_split_deterministic_and_seed_sensitive():
    m = latent_ratings(seed=2)
    a, b = split(m, seed=5), split(m, seed=5)
    assert a.test == b.test and a.train.fingerprint() == b.train.fingerprint()
    assert split(m, seed=6).test != a.test


def test_split_rejects_bad_input():
    with pytest.raises(EmptyDatasetError):
        split(RatingMatrix(2, 2, [], [], []))
    m = RatingMatrix.from_dense([[1, 2]])
    for tr, va in [(0.0, 0.0), (1.0, 0.0), (0.5, 1.0), (0.5, -0.1)]:
        with pytest.raises(ContractViolation):
            split(m, tr, va)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    train_ratio=st.sampled_from([0.5, 0.75, 0.8, 0.9]),
    validation_ratio=st.sampled_from([0.0, 0.25, 0.5]),
)
def test_split_partition_property(seed, train_ratio, validation_ratio):
    m = latent_ratings(n_users=25, n_items=30, density=0.3, seed=seed % 7)
    s = split(m, train_ratio, validation_ratio, seed=seed)
    train = {(u, i, r) for u, i, r in s.train.entries()}
    test, val = set(s.test), set(s.validation)
    assert not (train & test) and not (train & val) and not (test & val)
    assert train | test | val == set(m.entries())
    assert s.train.nnz + len(s.test) + len(s.validation) == m.nnz
    counts = m.user_counts()
    for u in np.flatnonzero(counts >= 4):
        n_test = sum(1 for t in s.test if t[0] == u)
        assert n_test == int(np.floor(counts[u] * (1 - train_ratio) + 1e-9))


# Published statistics of the two ml-latest-small snapshots in circulation.
ML_SMALL_SNAPSHOTS = {100_836: (610, 9_724), 100_004: (671, 9_066)}


@pytest.mark.slow
def test_movielens_small_statistics(ml_small):
    if ml_small.nnz not in ML_SMALL_SNAPSHOTS:
        pytest.skip(f"unrecognised ml-latest-small snapshot with {ml_small.nnz} ratings")
    assert (ml_small.num_users, ml_small.num_items) == ML_SMALL_SNAPSHOTS[ml_small.nnz]
    assert ml_small.rating_max == 5 and ml_small.csr.data.min() >= 1
