"""The 11-feature observation vector computed from a live search state.

Feature order is a serialization contract (CSV columns and model inputs
share it): nstep, ndis, ninserts, firstNN, closestNN, furthestNN, avg,
var, med, perc25, perc75. Statistics are population statistics over the
current result set truncated to k, with linear-interpolation percentiles;
distances stay squared L2, the space the predictor learns in.
"""

from __future__ import annotations

import numpy as np

from .state import SearchState

FEATURE_NAMES = (
    "nstep", "ndis", "ninserts", "firstNN", "closestNN", "furthestNN",
    "avg", "var", "med", "perc25", "perc75",
)
N_FEATURES = len(FEATURE_NAMES)

OBSERVATION_COLUMNS = ("query_id",) + FEATURE_NAMES + ("recall",)


def _percentile_sorted(d: list, q: float) -> float:
    """Linear-interpolation percentile of an ascending list (the same
    virtual-index rule numpy uses), without the array round trip."""
    pos = q * (len(d) - 1)
    lo = int(pos)
    frac = pos - lo
    if frac == 0.0:
        return d[lo]
    return d[lo] + (d[lo + 1] - d[lo]) * frac


def extract_features(state: SearchState) -> np.ndarray:
    """Snapshot the feature row for the current state (never mutates it).

    This runs once per predictor check and once per observation row, so
    it works on the sorted result list directly; population mean/var are
    accumulated in two cancellation-safe passes.
    """
    top = state.result[: state.k]
    if not top:
        raise RuntimeError("cannot extract features from an empty result set")
    if state.first_nn < 0:
        raise RuntimeError("firstNN not initialized")
    d = [t[0] for t in top]
    n = len(d)
    s = 0.0
    for v in d:
        s += v
    mean = s / n
    ss = 0.0
    for v in d:
        ss += (v - mean) ** 2
    row = np.empty(N_FEATURES, dtype=np.float64)
    row[0] = state.nstep
    row[1] = state.ndis
    row[2] = state.ninserts
    row[3] = state.first_nn
    row[4] = d[0]
    row[5] = d[-1]
    row[6] = mean
    row[7] = ss / n
    row[8] = _percentile_sorted(d, 0.50)
    row[9] = _percentile_sorted(d, 0.25)
    row[10] = _percentile_sorted(d, 0.75)
    return row


def write_observations(path: str, query_ids, X, labels) -> None:
    """Write a training log as CSV with the contractual column order."""
    query_ids = np.asarray(query_ids, dtype=np.int64)
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != N_FEATURES:
        raise ValueError(f"observation matrix must be (n, {N_FEATURES})")
    if not (query_ids.shape[0] == X.shape[0] == labels.shape[0]):
        raise ValueError("query_ids, X, and labels must align")
    with open(path, "w", encoding="ascii") as f:
        f.write(",".join(OBSERVATION_COLUMNS) + "\n")
        for qid, row, y in zip(query_ids, X, labels):
            vals = ",".join(format(v, ".17g") for v in row)
            f.write(f"{qid},{vals},{format(y, '.17g')}\n")

def read_observations(path: str):
    """Read a training log; returns (query_ids, X, labels)."""
    from .errors import DataFormatError

    with open(path, "r", encoding="ascii") as f:
        header = f.readline().strip()
    if header.split(",") != list(OBSERVATION_COLUMNS):
        raise DataFormatError(f"{path}: unexpected observation header {header!r}")
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=np.float64)
    if raw.size == 0:
        return (np.empty(0, np.int64), np.empty((0, N_FEATURES)), np.empty(0))
    if raw.shape[1] != len(OBSERVATION_COLUMNS):
        raise DataFormatError(f"{path}: wrong column count {raw.shape[1]}")
    return raw[:, 0].astype(np.int64), raw[:, 1:-1].copy(), raw[:, -1].copy()
