"""Training-data generation for the recall predictor.

A `_QueryObserver` rides along a plain search as its per-distance hook.
It maintains the running recall incrementally — when an evaluation lands
in the current top-k, the inserted id enters the intersection with the
ground-truth top-k and the displaced id leaves it, no rescans — and
emits one labeled observation row every ``stride`` distance
calculations, plus a closing row at natural termination.

Because result insertions follow the same (distance, id) order the
ground truth is ranked by, the running recall never decreases, so "first
ndis at which recall reached t" is well defined for every target t; the
observer records those crossings for the whole target grid in the same
pass, and their per-target means form the `EffortTable` that seeds the
termination policy's check intervals.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError
from .features import N_FEATURES, extract_features
from .validation import check_positive_int, check_vectors

DEFAULT_TARGET_GRID = np.round(np.arange(50, 101) / 100.0, 2)


def label_recall(current_topk, gt_row, k):
    """Fraction of the true top-k present among the returned ids."""
    gt_set = set(int(v) for v in gt_row[:k])
    return len(gt_set.intersection(int(v) for v in current_topk)) / k


class _QueryObserver:
    """Per-distance hook recording stride-spaced observation rows and
    recall crossings for one query. Never asks the search to stop."""

    __slots__ = ("k", "gt", "inter", "targets", "ptr", "crossings",
                 "stride", "rows", "labels", "row_ndis", "state")

    def __init__(self, gt_row, k, targets, stride):
        self.k = k
        self.gt = set(int(v) for v in gt_row[:k])
        self.inter = 0
        self.targets = targets
        self.ptr = 0
        self.crossings = np.full(targets.shape[0], -1, dtype=np.int64)
        self.stride = stride
        self.rows = []
        self.labels = []
        self.row_ndis = 0
        self.state = None

    def __call__(self, state):
        self.state = state
        rank = state.last_rank
        if 0 <= rank < self.k:
            if state.last_id in self.gt:
                self.inter += 1
            if state.last_displaced >= 0 and state.last_displaced in self.gt:
                self.inter -= 1
            recall = self.inter / self.k
            targets = self.targets
            while self.ptr < targets.shape[0] and \
                    recall >= targets[self.ptr] - 1e-12:
                self.crossings[self.ptr] = state.ndis
                self.ptr += 1
        if state.ndis % self.stride == 0 and state.result:
            self.rows.append(extract_features(state))
            self.labels.append(self.inter / self.k)
            self.row_ndis = state.ndis
        return False

    def finish(self, natural_ndis):
        """Close out after natural termination: emit the terminal state
        as a row (unless the last stride row already sits at the same
        ndis) and charge unreached targets the full natural effort. The
        state object is the one the search mutated through the hook, so
        it holds the terminal counters and result set."""
        if self.state is not None and self.state.result and \
                self.state.ndis > self.row_ndis:
            self.rows.append(extract_features(self.state))
            self.labels.append(self.inter / self.k)
            self.row_ndis = self.state.ndis
        self.crossings[self.crossings < 0] = natural_ndis


@dataclass
class TrainingData:
    """Observation log plus per-query effort bookkeeping.

    ``crossings[q, t]`` is the ndis at which query q first reached
    recall target t; targets the query never reached are charged its
    natural (full-search) ndis and flagged False in ``reached``.
    """

    query_ids: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    crossings: np.ndarray
    reached: np.ndarray
    natural_ndis: np.ndarray
    targets: np.ndarray
    stride: int
    index_kind: str

    def effort_table(self):
        return EffortTable(self.targets.copy(),
                           self.crossings.mean(axis=0))


@dataclass
class EffortTable:
    """Mean first-crossing effort per recall target, keyed at two
    decimals in the JSON form."""

    targets: np.ndarray
    efforts: np.ndarray

    def effort_for(self, recall_target):
        """Effort at the nearest tabulated target (they are keyed at two
        decimals, so an exact-grid query matches exactly; ties between
        two equally-near keys resolve toward the lower one)."""
        key = round(float(recall_target), 2)
        deltas = np.abs(self.targets - key)
        return float(self.efforts[int(deltas.argmin())])

    def save(self, path):
        payload = {f"{t:.2f}": float(e)
                   for t, e in zip(self.targets, self.efforts)}
        with open(path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as f:
            try:
                payload = json.load(f)
            except json.JSONDecodeError as e:
                raise DataFormatError(f"{path}: not valid JSON ({e})") from e
        if not isinstance(payload, dict) or not payload:
            raise DataFormatError(f"{path}: expected a non-empty object")
        try:
            items = sorted((float(kk), float(vv))
                           for kk, vv in payload.items())
        except (TypeError, ValueError) as e:
            raise DataFormatError(
                f"{path}: keys/values must be numeric ({e})") from e
        targets = np.array([t for t, _ in items])
        efforts = np.array([e for _, e in items])
        return cls(targets, efforts)


def generate_training_data(index, queries, gt, k, search_params=None,
                           stride=1, targets=DEFAULT_TARGET_GRID,
                           workers=1):
    """Run every query plain with an observer hook and collect the log.

    ``search_params`` are forwarded to ``index.search`` (``ef_search``
    for the graph index, ``nprobe`` for the inverted-file one). With
    ``workers > 1`` queries run on a thread pool; results are assembled
    in query order, so the output is identical to a sequential run.
    """
    queries = check_vectors(queries, "queries")
    check_positive_int(k, "k", 1)
    check_positive_int(stride, "stride", 1)
    if gt.ids.shape[0] != queries.shape[0]:
        raise ValueError(
            f"ground truth has {gt.ids.shape[0]} rows for "
            f"{queries.shape[0]} queries")
    if gt.ids.shape[1] < k:
        raise ValueError(
            f"ground truth depth {gt.ids.shape[1]} is shallower than k={k}")
    search_params = dict(search_params or {})
    targets = np.asarray(targets, dtype=np.float64)
    if targets.size == 0 or np.any(np.diff(targets) <= 0):
        raise ValueError("targets must be non-empty and strictly increasing")

    n = queries.shape[0]

    def run(i):
        obs = _QueryObserver(gt.ids[i], k, targets, stride)
        outcome = index.search(queries[i], k, hook=obs, **search_params)
        return obs, outcome

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(n)))
    else:
        results = [run(i) for i in range(n)]

    all_ids = []
    all_rows = []
    all_labels = []
    crossings = np.empty((n, targets.shape[0]), dtype=np.int64)
    reached = np.empty((n, targets.shape[0]), dtype=bool)
    natural = np.empty(n, dtype=np.int64)
    for i, (obs, outcome) in enumerate(results):
        reached[i] = obs.crossings >= 0
        obs.finish(outcome.ndis)
        crossings[i] = obs.crossings
        natural[i] = outcome.ndis
        if obs.rows:
            all_ids.append(np.full(len(obs.rows), i, dtype=np.int64))
            all_rows.append(np.vstack(obs.rows))
            all_labels.append(np.asarray(obs.labels, dtype=np.float64))
    if all_rows:
        query_ids = np.concatenate(all_ids)
        features = np.vstack(all_rows)
        labels = np.concatenate(all_labels)
    else:
        query_ids = np.empty(0, dtype=np.int64)
        features = np.empty((0, N_FEATURES), dtype=np.float64)
        labels = np.empty(0, dtype=np.float64)
    kind = type(index).__name__
    return TrainingData(query_ids, features, labels, crossings, reached,
                        natural, targets, int(stride), kind)
