"""Learned early termination against a per-query recall target.

The policy asks a trained recall predictor "how much of the true top-k
do we already hold?" at widening-or-shrinking intervals of distance
computations:

* the first check happens once ``ipi`` distances have accumulated, where
  ``ipi`` is half the mean effort historical queries needed to reach the
  target (from the EffortTable);
* a check either stops the search (predicted recall >= target) or
  schedules the next one after ``mpi + (ipi - mpi) * (target - predicted)``
  distances, so near-target states re-check almost immediately while
  far-from-target states wait longer;
* ``mpi``, a tenth of the same mean effort, floors the interval so checks
  can never degenerate into one per distance.

Graph searches evaluate the rule at expansion boundaries (overshooting a
pending interval by at most one node's degree); bucket scans evaluate it
on the exact distance where the interval elapses.
"""

from __future__ import annotations

from dataclasses import dataclass

from .features import extract_features
from .hnsw import HnswIndex
from .ivf import IvfIndex


def heuristic_intervals(effort_table, recall_target):
    """(ipi, mpi) derived from the mean effort at this target."""
    effort = effort_table.effort_for(recall_target)
    ipi = max(1, int(round(effort / 2.0)))
    mpi = max(1, int(round(effort / 10.0)))
    return ipi, min(mpi, ipi)


def next_interval(ipi, mpi, predicted, target):
    """Distance budget until the next predictor call, linearly
    interpolated on the remaining recall gap and clamped to [mpi, ipi]."""
    gap = target - predicted
    pi = int(round(mpi + (ipi - mpi) * gap))
    return max(mpi, min(ipi, pi))


@dataclass
class RecallTargetConfig:
    """Per-target policy settings: the declarative recall target plus the
    two check intervals seeding the adaptive schedule."""

    recall_target: float
    initial_interval: int
    min_interval: int

    def __post_init__(self):
        if not 0.0 < self.recall_target <= 1.0:
            raise ValueError(
                f"recall_target must be in (0, 1], got {self.recall_target}")
        if self.initial_interval < 1 or self.min_interval < 1:
            raise ValueError("check intervals must be >= 1")
        if self.min_interval > self.initial_interval:
            raise ValueError(
                f"min_interval {self.min_interval} exceeds initial "
                f"interval {self.initial_interval}")

    @classmethod
    def from_effort_table(cls, effort_table, recall_target,
                          interval_scale=1.0):
        ipi, mpi = heuristic_intervals(effort_table, recall_target)
        if interval_scale != 1.0:
            ipi = max(1, int(round(ipi * interval_scale)))
            mpi = max(1, min(ipi, int(round(mpi * interval_scale))))
        return cls(recall_target, ipi, mpi)


class AdaptiveTermination:
    """One query's worth of policy state; create fresh per query and hand
    its hooks to the index search."""

    __slots__ = ("model", "target", "ipi", "mpi", "pi")

    def __init__(self, model, config):
        self.model = model
        self.target = config.recall_target
        self.ipi = config.initial_interval
        self.mpi = config.min_interval
        self.pi = config.initial_interval

    def _check(self, state):
        predicted = self.model.predict_row(extract_features(state))
        state.predictor_calls += 1
        predicted = 0.0 if predicted < 0.0 else \
            1.0 if predicted > 1.0 else predicted
        if predicted >= self.target:
            return True
        self.pi = next_interval(self.ipi, self.mpi, predicted, self.target)
        state.idis = 0
        return False

    def per_distance(self, state):
        """Hook for scans where the interval elapses exactly."""
        if state.idis >= self.pi and state.result:
            return self._check(state)
        return False

    def at_boundary(self, state):
        """Hook for graph searches, evaluated between expansions."""
        if state.idis >= self.pi and state.result:
            return self._check(state)
        return False


def run_recall_target_query(index, query, k, model, config,
                            search_params=None):
    """Answer one query under a declarative recall target. Returns the
    QueryOutcome; elapsed time covers the predictor calls too, since they
    run inside the search loop."""
    policy = AdaptiveTermination(model, config)
    params = dict(search_params or {})
    if isinstance(index, HnswIndex):
        return index.search(query, k, boundary_hook=policy.at_boundary,
                            **params)
    if isinstance(index, IvfIndex):
        return index.search(query, k, hook=policy.per_distance, **params)
    raise TypeError(f"unsupported index type {type(index).__name__}")
