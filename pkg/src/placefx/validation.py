"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np


class RankDeficient(ValueError):
    """Design matrix does not have full column rank."""


class DimensionMismatch(ValueError):
    """Array shapes are inconsistent."""


def check_vector(y, name: str = "y") -> np.ndarray:
    """Coerce to a finite 1-d float array."""
    arr = np.asarray(y, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce to a finite 2-d float array (a 1-d input becomes one column)."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_consistent_rows(*arrays) -> int:
    lengths = {a.shape[0] for a in arrays}
    if len(lengths) != 1:
        raise DimensionMismatch(f"inconsistent row counts: {sorted(lengths)}")
    return lengths.pop()


def check_full_rank(X: np.ndarray, name: str = "X") -> None:
    """Raise RankDeficient unless X has full column rank."""
    if X.shape[0] < X.shape[1]:
        raise RankDeficient(
            f"{name} has more columns ({X.shape[1]}) than rows ({X.shape[0]})"
        )
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise RankDeficient(f"{name} has rank {rank} < {X.shape[1]} columns")


def add_intercept(X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(X.shape[0]), X])
