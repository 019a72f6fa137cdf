"""Small input-validation helpers used by the estimators and data containers."""

from __future__ import annotations

import numpy as np


def as_float_array(x, name="array", ndim=None):
    """Coerce to a float64 ndarray and require finite entries."""
    arr = np.asarray(x, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_ascending(x, name="axis", strict=True):
    arr = as_float_array(x, name, ndim=1)
    diffs = np.diff(arr)
    if strict and np.any(diffs <= 0):
        raise ValueError(f"{name} must be strictly ascending")
    if not strict and np.any(diffs < 0):
        raise ValueError(f"{name} must be non-decreasing")
    return arr


def check_feature_matrix(X, n_features, name="X"):
    arr = as_float_array(X, name, ndim=2)
    if arr.shape[1] != n_features:
        raise ValueError(
            f"{name} must have {n_features} columns, got {arr.shape[1]}"
        )
    if arr.shape[0] == 0:
        raise ValueError(f"{name} must contain at least one row")
    return arr


def check_vector(y, n_rows=None, name="y"):
    arr = as_float_array(y, name, ndim=1)
    if n_rows is not None and arr.shape[0] != n_rows:
        raise ValueError(f"{name} must have length {n_rows}, got {arr.shape[0]}")
    return arr


def check_positive(value, name):
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return value
