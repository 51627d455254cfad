"""Input validation helpers.

These are float32-aware replacements for the usual sklearn check_array
pattern: vector data in this package is row-major float32 throughout, and
silently promoting to float64 would double memory and break byte-level
determinism contracts.
"""

from __future__ import annotations

import numpy as np


def check_vectors(X, name: str = "X") -> np.ndarray:
    """Validate a 2-D finite float vector collection and return it as
    C-contiguous float32 (copying only when needed)."""
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D (count, dim), got shape {X.shape}")
    if X.shape[0] > 0 and X.shape[1] < 1:
        raise ValueError(f"{name} must have dim >= 1, got {X.shape[1]}")
    X = np.ascontiguousarray(X, dtype=np.float32)
    if X.size and not np.isfinite(X).all():
        bad = np.flatnonzero(~np.isfinite(X).all(axis=1))[0]
        raise ValueError(f"{name} contains non-finite values (first bad row: {bad})")
    return X

def check_query(q, dim: int, name: str = "q") -> np.ndarray:
    """Validate a single query vector against an index dimension."""
    q = np.asarray(q, dtype=np.float32).ravel()
    if q.shape[0] != dim:
        raise ValueError(f"{name} has dim {q.shape[0]}, index has dim {dim}")
    if not np.isfinite(q).all():
        raise ValueError(f"{name} contains non-finite values")
    return np.ascontiguousarray(q)

def check_positive_int(value, name: str, minimum: int = 1) -> int:
    v = int(value)
    if v < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return v
