"""Live search state and per-query outcome records.

One SearchState instance backs every traversal in the package (plain,
hooked, budgeted, and recall-target searches all run the same loop), so
observers see identical semantics everywhere.

The result set is kept as an ascending-sorted list of ``(dist, id)``
tuples capped at a working width (``max(k, efSearch)`` for HNSW, ``k`` for
IVF). Sorted-list maintenance makes the top-k view and its statistics a
prefix read, which is what feature extraction and recall labeling need.
Ties order by lower id via lexicographic tuple comparison.
"""

from __future__ import annotations

from bisect import bisect_left, insort
from dataclasses import dataclass, field

import numpy as np


@dataclass
class QueryOutcome:
    """Result of one query: final top-k plus effort counters."""

    ids: np.ndarray        # (<=k,) int64, sorted by (dist, id)
    dists: np.ndarray      # (<=k,) float64 squared L2, non-decreasing
    ndis: int              # base-layer distance calculations
    nstep: int             # completed expansion steps / scanned buckets
    ninserts: int          # result-set insertions
    predictor_calls: int = 0
    terminated: str = "natural"  # "natural" | "early"
    elapsed: float = 0.0         # seconds, wall clock


class SearchState:
    """Mutable per-query search state observed by hooks.

    Counter semantics (shared by HNSW and IVF searches):

    * ``ndis``: distance calculations so far (base layer only for HNSW;
      centroid ranking optionally included for IVF).
    * ``nstep``: completed base-layer expansions (HNSW) or the 1-based
      ordinal of the bucket currently scanned (IVF).
    * ``ninserts``: number of insertions into the result set.
    * ``idis``: distance calculations since the last predictor call; reset
      only by the early-termination policy.
    * ``first_nn``: first base-layer distance (HNSW) or nearest-centroid
      distance (IVF); set exactly once.

    ``last_id``/``last_dist``/``last_rank``/``last_displaced`` describe the
    most recent distance evaluation so observers can maintain incremental
    recall without rescanning: ``last_rank`` is the insertion position or
    -1 if rejected, and ``last_displaced`` is the id pushed out of the
    top-k by that insertion (or -1).
    """

    __slots__ = (
        "k", "width", "result", "ndis", "nstep", "ninserts", "idis",
        "first_nn", "predictor_calls", "last_id", "last_dist", "last_rank",
        "last_displaced",
    )

    def __init__(self, k: int, width: int):
        if width < k:
            raise ValueError(f"working width {width} below k={k}")
        self.k = k
        self.width = width
        self.result: list[tuple[float, int]] = []
        self.ndis = 0
        self.nstep = 0
        self.ninserts = 0
        self.idis = 0
        self.first_nn = -1.0
        self.predictor_calls = 0
        self.last_id = -1
        self.last_dist = -1.0
        self.last_rank = -1
        self.last_displaced = -1

    def count_distance(self, dist: float, node: int) -> None:
        """Record one distance evaluation (before any insert attempt)."""
        self.ndis += 1
        self.idis += 1
        self.last_id = node
        self.last_dist = dist
        self.last_rank = -1
        self.last_displaced = -1

    def worst(self) -> float:
        """Current width-capped result-set maximum distance."""
        return self.result[-1][0]

    def admits(self, dist: float, node: int) -> bool:
        if len(self.result) < self.width:
            return True
        return (dist, node) < self.result[-1]

    def insert(self, dist: float, node: int) -> bool:
        """Attempt a result-set insertion; returns True if it landed."""
        entry = (dist, node)
        res = self.result
        if len(res) >= self.width and entry >= res[-1]:
            return False
        pos = bisect_left(res, entry)
        insort(res, entry)
        if pos < self.k and len(res) > self.k:
            self.last_displaced = res[self.k][1]
        if len(res) > self.width:
            res.pop()
        self.ninserts += 1
        self.last_rank = pos
        return True

    def top_k(self) -> list[tuple[float, int]]:
        return self.result[: self.k]

    def top_k_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        top = self.result[: self.k]
        ids = np.fromiter((t[1] for t in top), dtype=np.int64, count=len(top))
        dists = np.fromiter((t[0] for t in top), dtype=np.float64, count=len(top))
        return ids, dists

    def outcome(self, terminated: str, elapsed: float = 0.0) -> QueryOutcome:
        ids, dists = self.top_k_arrays()
        return QueryOutcome(
            ids=ids, dists=dists, ndis=self.ndis, nstep=self.nstep,
            ninserts=self.ninserts, predictor_calls=self.predictor_calls,
            terminated=terminated, elapsed=elapsed,
        )
