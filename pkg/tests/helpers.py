import numpy as np

from broadcf import RatingMatrix


def random_dense(rng, n_users, n_items, density=0.4, rating_max=5):
    dense = rng.integers(1, rating_max + 1, size=(n_users, n_items))
    dense[rng.random((n_users, n_items)) >= density] = 0
    if not dense.any():
        dense[0, 0] = 3
    return dense


def latent_ratings(n_users=120, n_items=160, density=0.25, seed=0, rank=3):
    """Low-rank integer ratings so models have signal to find."""
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(n_users, rank))
    Q = rng.normal(size=(n_items, rank))
    scores = 3.0 + 0.8 * (P @ Q.T) + 0.3 * rng.normal(size=(n_users, n_items))
    dense = np.clip(np.rint(scores), 1, 5).astype(int)
    dense[rng.random((n_users, n_items)) >= density] = 0
    return RatingMatrix.from_dense(dense)


def write_csv(path, matrix, header=True):
    with open(path, "w") as fh:
        if header:
            fh.write("user,item,rating\n")
        for u, i, r in matrix.entries():
            fh.write(f"u{u},i{i},{r}\n")
    return path
