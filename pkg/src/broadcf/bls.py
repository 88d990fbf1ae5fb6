"""Broad Learning System with random ReLU feature layers and a ridge readout.

Only the output weights are learned. Mapped groups project the input with
fixed random weights, enhancement groups project the concatenated mapped
features again, and a single regularised least-squares solve fits the
readout from ``[mapped | enhanced]`` to the targets.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .errors import ConfigError, ContractViolation, ModelStateError, SolverError


@dataclass(frozen=True)
class BlsHyperparams:
    n: int = 25
    d_z: int = 10
    m: int = 25
    d_h: int = 15
    lam: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        for name in ("n", "d_z", "m", "d_h"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value}")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ConfigError(f"lambda must be finite and >= 0, got {self.lam}")

    @property
    def feature_dim(self) -> int:
        return self.n * self.d_z + self.m * self.d_h


@dataclass(frozen=True, eq=False)
class BlsModel:
    """Random layer weights, stacked per group, plus the readout ``W``.

    Shapes: ``W_z`` (n, input_dim, d_z), ``beta_z`` (n, d_z), ``W_h``
    (m, n*d_z, d_h), ``beta_h`` (m, d_h), ``W`` (n*d_z + m*d_h, d_y).
    """

    hyperparams: BlsHyperparams
    input_dim: int
    d_y: int
    W_z: np.ndarray
    beta_z: np.ndarray
    W_h: np.ndarray
    beta_h: np.ndarray
    W: np.ndarray
    trained: bool = False


def init_random(hyperparams: BlsHyperparams, input_dim: int, d_y: int = 5) -> BlsModel:
    """Draw every random weight i.i.d. from U[-1, 1] with ``hyperparams.seed``."""
    if input_dim < 1 or d_y < 1:
        raise ContractViolation("input_dim and d_y must be >= 1")
    hp = hyperparams
    rng = np.random.default_rng(hp.seed)
    W_z = rng.uniform(-1.0, 1.0, size=(hp.n, input_dim, hp.d_z))
    beta_z = rng.uniform(-1.0, 1.0, size=(hp.n, hp.d_z))
    W_h = rng.uniform(-1.0, 1.0, size=(hp.m, hp.n * hp.d_z, hp.d_h))
    beta_h = rng.uniform(-1.0, 1.0, size=(hp.m, hp.d_h))
    W = np.zeros((hp.feature_dim, d_y))
    return BlsModel(hp, input_dim, d_y, W_z, beta_z, W_h, beta_h, W)


def _relu(x):
    return np.maximum(x, 0.0)


def _group_project(inputs: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    # (g, in, d) weights laid side by side give one (in, g*d) product.
    g, d_in, d = weights.shape
    stacked = weights.transpose(1, 0, 2).reshape(d_in, g * d)
    return _relu(inputs @ stacked + bias.reshape(1, g * d))


def mapped_features(model: BlsModel, X) -> np.ndarray:
    """``[relu(X W_z[0] + beta_z[0]) | ... | relu(X W_z[n-1] + beta_z[n-1])]``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.input_dim:
        raise ContractViolation(f"expected {model.input_dim} input columns, got {X.shape[1]}")
    return _group_project(X, model.W_z, model.beta_z)


def enhanced_features(model: BlsModel, Z) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    expected = model.hyperparams.n * model.hyperparams.d_z
    if Z.shape[1] != expected:
        raise ContractViolation(f"expected {expected} mapped-feature columns, got {Z.shape[1]}")
    return _group_project(Z, model.W_h, model.beta_h)


def feature_matrix(model: BlsModel, X) -> np.ndarray:
    """The readout's design matrix ``[mapped | enhanced]``."""
    Z = mapped_features(model, X)
    return np.hstack([Z, enhanced_features(model, Z)])


def _spd_solve(gram: np.ndarray, rhs: np.ndarray, lam: float) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            return scipy.linalg.solve(gram, rhs, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
            if lam == 0:
                raise SolverError(f"normal equations are singular ({exc}); use lambda > 0") from exc
    # Positive definite in exact arithmetic; rounding broke the Cholesky.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        try:
            return scipy.linalg.solve(gram, rhs, assume_a="sym")
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"ridge system could not be solved: {exc}") from exc


def ridge_solve(A, Y, lam: float) -> np.ndarray:
    """``(A^T A + lam I)^{-1} A^T Y`` via a symmetric positive-definite solve.

    With ``lam > 0`` and fewer rows than columns the identical solution
    ``A^T (A A^T + lam I)^{-1} Y`` is used instead. ``A^T A`` is then rank
    deficient and only ``lam`` keeps it invertible, so the primal system is
    ill-conditioned while the row-space system is not.

    Raises:
        SolverError: ``A^T A`` is singular or numerically so and ``lam`` is 0,
            or the factorisation fails outright.
    """
    A = np.asarray(A, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if A.ndim != 2 or Y.ndim != 2 or A.shape[0] != Y.shape[0] or A.shape[0] < 1:
        raise ContractViolation("A and Y must be 2-D with the same (non-zero) row count")
    if lam < 0:
        raise ContractViolation("lambda must be >= 0")
    if lam > 0 and A.shape[0] < A.shape[1]:
        kernel = A @ A.T
        kernel[np.diag_indices_from(kernel)] += lam
        W = A.T @ _spd_solve(kernel, Y, lam)
    else:
        gram = A.T @ A
        gram[np.diag_indices_from(gram)] += lam
        W = _spd_solve(gram, A.T @ Y, lam)
    if not np.all(np.isfinite(W)):
        raise SolverError("ridge solution is not finite; increase lambda")
    return W


def train(model: BlsModel, X, Y) -> BlsModel:
    """Fit the readout on ``(X, Y)``; random layers are left untouched."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[0] != Y.shape[0] or X.shape[0] < 1:
        raise ContractViolation("X and Y need the same non-zero number of rows")
    if Y.shape[1] != model.d_y:
        raise ContractViolation(f"expected {model.d_y} target columns, got {Y.shape[1]}")
    A = feature_matrix(model, X)
    W = ridge_solve(A, Y, model.hyperparams.lam)
    return replace(model, W=W, trained=True)


def forward(model: BlsModel, x) -> np.ndarray:
    """Rating strength vector(s): ``[mapped | enhanced](x) @ W``.

    A 1-D ``x`` gives a length-``d_y`` vector, a 2-D batch gives one row each.
    """
    if not model.trained:
        raise ModelStateError("model has not been trained")
    x = np.asarray(x, dtype=np.float64)
    out = feature_matrix(model, x) @ model.W
    return out[0] if x.ndim == 1 else out


def count_trainable(model: BlsModel) -> int:
    """Number of learned parameters, i.e. entries of ``W``."""
    return model.hyperparams.feature_dim * model.d_y
