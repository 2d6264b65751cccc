"""Input validation helpers shared by design builders and estimators."""

from __future__ import annotations

import numpy as np

from herdstat.errors import DesignError


def as_float_vector(y, name: str = "y") -> np.ndarray:
    y = np.asarray(y, dtype=float).squeeze()
    if y.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError(f"{name} contains non-finite values")
    return y


def as_float_matrix(X, name: str = "X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_full_rank(X: np.ndarray, column_names=None) -> None:
    """Raise DesignError when a column is identically zero or X is rank deficient."""
    names = list(column_names) if column_names is not None else [f"x{j}" for j in range(X.shape[1])]
    zero = [names[j] for j in range(X.shape[1]) if not np.any(X[:, j])]
    if zero:
        raise DesignError(f"design column(s) identically zero: {', '.join(zero)}")
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise DesignError(
            f"design matrix is rank deficient (rank {rank} < {X.shape[1]} columns: {', '.join(names)})"
        )


def check_transition_matrix(transition, n_regimes: int | None = None, tol: float = 1e-8) -> np.ndarray:
    """Validate a row-stochastic transition matrix and return it as a float array."""
    P = np.asarray(transition, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"transition matrix must be square, got shape {P.shape}")
    if n_regimes is not None and P.shape[0] != n_regimes:
        raise ValueError(f"transition matrix has {P.shape[0]} rows, expected {n_regimes}")
    if np.any(P < -tol) or np.any(P > 1 + tol):
        raise ValueError("transition matrix entries must lie in [0, 1]")
    row_sums = P.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > tol):
        raise ValueError(f"transition matrix rows must sum to 1, got sums {row_sums}")
    return P
