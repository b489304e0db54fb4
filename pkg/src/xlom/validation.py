"""Input validation helpers shared by the estimator-style APIs."""

from __future__ import annotations

import numpy as np

from .errors import XlomError


def check_matrix(X, *, name: str = "X", dtype=np.float64) -> np.ndarray:
    """Coerce to a 2-d float array with at least one row, all finite."""
    arr = np.asarray(X, dtype=dtype)
    if arr.ndim != 2:
        raise XlomError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise XlomError(f"{name} is empty")
    if not np.isfinite(arr).all():
        bad = int(np.argwhere(~np.isfinite(arr).all(axis=1))[0][0])
        raise XlomError(f"{name} contains a non-finite value at row {bad}")
    return arr


def check_vector(v, *, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise XlomError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise XlomError(f"{name} contains a non-finite value")
    return arr


def check_same_dim(a: np.ndarray, b: np.ndarray, *, what: str = "inputs") -> None:
    if a.shape[-1] != b.shape[-1]:
        raise XlomError(
            f"dimension mismatch between {what}: {a.shape[-1]} vs {b.shape[-1]}"
        )
