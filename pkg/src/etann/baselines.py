"""Termination baselines the adaptive policy is judged against.

* fixed budget — stop once ndis reaches a constant;
* REM — offline mapping from recall target to the smallest search width
  (ef_search / nprobe) whose mean recall on held-out queries meets the
  target;
* LAET — a regressor predicts, from the search state at a fixed early
  point, how many distance computations this query needs before its
  final top-k is complete; a per-target multiplier tuned on held-out
  queries scales that prediction into a stopping budget.

Both offline tables flag targets their knob could not attain; callers
decide whether that is an error (see InfeasibleTargetError).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, InfeasibleTargetError
from .features import extract_features
from .gbdt import GradientBoostedRegressor
from .hnsw import HnswIndex
from .ivf import IvfIndex
from .validation import check_positive_int, check_vectors

MULTIPLIER_GRID = np.round(np.arange(10, 301, 5) / 100.0, 2)


def _width_param(index):
    if isinstance(index, HnswIndex):
        return "ef_search"
    if isinstance(index, IvfIndex):
        return "nprobe"
    raise TypeError(f"unsupported index type {type(index).__name__}")


def _mean_recall(outcomes, gt, k):
    total = 0.0
    for i, out in enumerate(outcomes):
        gt_set = set(int(v) for v in gt.ids[i, :k])
        total += len(gt_set.intersection(int(v) for v in out.ids)) / k
    return total / len(outcomes)


# ---------------------------------------------------------------------------
# fixed budget
# ---------------------------------------------------------------------------

def fixed_budget_search(index, query, k, budget, search_params=None):
    """Stop as soon as ndis reaches the budget: between expansions on the
    graph index, on the exact distance during bucket scans."""
    check_positive_int(budget, "budget", 1)
    params = dict(search_params or {})

    def stop(state):
        return state.ndis >= budget

    if isinstance(index, HnswIndex):
        return index.search(query, k, boundary_hook=stop, **params)
    if isinstance(index, IvfIndex):
        return index.search(query, k, hook=stop, **params)
    raise TypeError(f"unsupported index type {type(index).__name__}")


# ---------------------------------------------------------------------------
# REM: recall-to-width mapping
# ---------------------------------------------------------------------------

@dataclass
class RemTable:
    """Smallest ladder width meeting each recall target on the tuning
    queries. ``attained[t]`` is False where even the top of the ladder
    fell short (the table then holds that top value)."""

    param: str
    ladder: list
    widths: dict = field(default_factory=dict)
    attained: dict = field(default_factory=dict)
    mean_recalls: dict = field(default_factory=dict)

    @staticmethod
    def _key(target):
        return f"{round(float(target), 2):.2f}"

    def width_for(self, target, strict=False):
        key = self._key(target)
        if key not in self.widths:
            raise KeyError(f"recall target {target!r} is not in the table")
        if strict and not self.attained[key]:
            raise InfeasibleTargetError(
                f"recall target {key} unattained: best mean recall "
                f"{self.mean_recalls[key]:.4f} at {self.param}="
                f"{self.widths[key]}")
        return self.widths[key]

    def save(self, path):
        payload = {
            "param": self.param,
            "ladder": [int(v) for v in self.ladder],
            "entries": {
                key: {"value": int(self.widths[key]),
                      "attained": bool(self.attained[key]),
                      "mean_recall": float(self.mean_recalls[key])}
                for key in sorted(self.widths)
            },
        }
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
        try:
            table = cls(param=payload["param"],
                        ladder=[int(v) for v in payload["ladder"]])
            for key, entry in payload["entries"].items():
                table.widths[key] = int(entry["value"])
                table.attained[key] = bool(entry["attained"])
                table.mean_recalls[key] = float(entry["mean_recall"])
        except (KeyError, TypeError, ValueError) as e:
            raise DataFormatError(f"{path}: malformed table ({e})") from e
        return table


def build_rem_table(index, queries, gt, k, targets, ladder,
                    search_params=None):
    """Run the whole ladder once over the tuning queries, then assign
    each target the smallest width whose mean recall reaches it."""
    queries = check_vectors(queries, "queries")
    params = dict(search_params or {})
    param = _width_param(index)
    ladder = sorted(int(v) for v in ladder)
    if not ladder:
        raise ValueError("ladder must not be empty")
    if param == "ef_search" and ladder[0] < k:
        raise ValueError(f"ladder includes ef_search below k={k}")

    means = []
    for width in ladder:
        p = dict(params)
        p[param] = width
        outcomes = [index.search(queries[i], k, **p)
                    for i in range(queries.shape[0])]
        means.append(_mean_recall(outcomes, gt, k))

    table = RemTable(param=param, ladder=ladder)
    for t in targets:
        key = table._key(t)
        hit = next((j for j, m in enumerate(means) if m >= float(t)), None)
        if hit is None:
            table.widths[key] = ladder[-1]
            table.attained[key] = False
            table.mean_recalls[key] = means[-1]
        else:
            table.widths[key] = ladder[hit]
            table.attained[key] = True
            table.mean_recalls[key] = means[hit]
    return table


def rem_search(index, query, k, table, target, search_params=None,
               strict=False):
    params = dict(search_params or {})
    params[table.param] = table.width_for(target, strict=strict)
    return index.search(query, k, **params)


# ---------------------------------------------------------------------------
# LAET: learned per-query budget
# ---------------------------------------------------------------------------

class _BudgetStop:
    """Hook that prices the query once at the fixed point, then stops
    when the scaled predicted budget is spent."""

    __slots__ = ("model", "fixed_point", "multiplier", "budget")

    def __init__(self, model, fixed_point, multiplier):
        self.model = model
        self.fixed_point = fixed_point
        self.multiplier = multiplier
        self.budget = None

    def __call__(self, state):
        if self.budget is None:
            if state.ndis < self.fixed_point or not state.result:
                return False
            predicted = self.model.predict_row(extract_features(state))
            state.predictor_calls += 1
            self.budget = max(self.fixed_point,
                              int(round(predicted * self.multiplier)))
        return state.ndis >= self.budget


def laet_search(index, query, k, model, fixed_point, multiplier,
                search_params=None):
    policy = _BudgetStop(model, fixed_point, multiplier)
    params = dict(search_params or {})
    if isinstance(index, HnswIndex):
        return index.search(query, k, boundary_hook=policy, **params)
    if isinstance(index, IvfIndex):
        return index.search(query, k, hook=policy, **params)
    raise TypeError(f"unsupported index type {type(index).__name__}")


class _BudgetObserver:
    """Training-time hook: captures the feature row at the fixed point
    and the ndis at which each result insertion happened."""

    __slots__ = ("fixed_point", "row", "insert_ndis", "state")

    def __init__(self, fixed_point):
        self.fixed_point = fixed_point
        self.row = None
        self.insert_ndis = {}
        self.state = None

    def __call__(self, state):
        self.state = state
        if state.last_rank >= 0:
            self.insert_ndis[state.last_id] = state.ndis
        if self.row is None and state.ndis >= self.fixed_point \
                and state.result:
            self.row = extract_features(state)
        return False


def generate_budget_training_data(index, queries, k, fixed_point,
                                  search_params=None):
    """One row per query: features at the fixed point, label = ndis at
    which the last member of the final top-k entered the result set (the
    cheapest budget that would have preserved the full natural answer).
    Needs no ground truth. Feature capture uses the same hook granularity
    as laet_search so training matches serving."""
    queries = check_vectors(queries, "queries")
    check_positive_int(fixed_point, "fixed_point", 1)
    params = dict(search_params or {})
    rows = np.empty((queries.shape[0], 11), dtype=np.float64)
    labels = np.empty(queries.shape[0], dtype=np.float64)
    is_graph = isinstance(index, HnswIndex)
    if not is_graph and not isinstance(index, IvfIndex):
        raise TypeError(f"unsupported index type {type(index).__name__}")

    for i in range(queries.shape[0]):
        obs = _BudgetObserver(fixed_point)

        def at_boundary(state, obs=obs):
            if obs.row is None and state.ndis >= fixed_point \
                    and state.result:
                obs.row = extract_features(state)
            return False

        if is_graph:
            outcome = index.search(queries[i], k, hook=obs,
                                   boundary_hook=at_boundary, **params)
        else:
            outcome = index.search(queries[i], k, hook=obs, **params)
        if obs.row is None:
            if obs.state is None or not obs.state.result:
                raise RuntimeError(
                    f"query {i} produced no result to learn from")
            obs.row = extract_features(obs.state)
        rows[i] = obs.row
        labels[i] = max(obs.insert_ndis[int(v)] for v in outcome.ids)
    return rows, labels


def train_budget_model(features, labels, **gbdt_params):
    params = dict(n_estimators=100, learning_rate=0.1, max_depth=6,
                  min_samples_leaf=20)
    params.update(gbdt_params)
    model = GradientBoostedRegressor(**params)
    model.fit(features, labels)
    return model


@dataclass
class LaetTable:
    """Tuned budget multiplier per recall target, plus the fixed point
    the model prices queries at."""

    fixed_point: int
    multipliers: dict = field(default_factory=dict)
    attained: dict = field(default_factory=dict)
    mean_recalls: dict = field(default_factory=dict)

    _key = staticmethod(RemTable._key)

    def multiplier_for(self, target, strict=False):
        key = self._key(target)
        if key not in self.multipliers:
            raise KeyError(f"recall target {target!r} is not in the table")
        if strict and not self.attained[key]:
            raise InfeasibleTargetError(
                f"recall target {key} unattained: best mean recall "
                f"{self.mean_recalls[key]:.4f} at multiplier "
                f"{self.multipliers[key]:.2f}")
        return self.multipliers[key]

    def save(self, path):
        payload = {
            "fixed_point": int(self.fixed_point),
            "entries": {
                key: {"multiplier": float(self.multipliers[key]),
                      "attained": bool(self.attained[key]),
                      "mean_recall": float(self.mean_recalls[key])}
                for key in sorted(self.multipliers)
            },
        }
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
        try:
            table = cls(fixed_point=int(payload["fixed_point"]))
            for key, entry in payload["entries"].items():
                table.multipliers[key] = float(entry["multiplier"])
                table.attained[key] = bool(entry["attained"])
                table.mean_recalls[key] = float(entry["mean_recall"])
        except (KeyError, TypeError, ValueError) as e:
            raise DataFormatError(f"{path}: malformed table ({e})") from e
        return table


def tune_laet_multipliers(index, queries, gt, k, model, fixed_point,
                          targets, search_params=None,
                          grid=MULTIPLIER_GRID):
    """Binary-search the multiplier grid per target. Recall is monotone
    in the multiplier (a larger budget only extends the same search
    trajectory), so binary search returns exactly what an exhaustive
    scan would; every probe re-runs the tuning queries for real."""
    queries = check_vectors(queries, "queries")
    grid = np.asarray(grid, dtype=np.float64)
    cache = {}

    def recall_at(j):
        if j not in cache:
            outcomes = [
                laet_search(index, queries[i], k, model, fixed_point,
                            float(grid[j]), search_params)
                for i in range(queries.shape[0])
            ]
            cache[j] = _mean_recall(outcomes, gt, k)
        return cache[j]

    table = LaetTable(fixed_point=int(fixed_point))
    for t in targets:
        key = table._key(t)
        lo, hi = 0, grid.shape[0] - 1
        if recall_at(hi) < float(t):
            table.multipliers[key] = float(grid[hi])
            table.attained[key] = False
            table.mean_recalls[key] = recall_at(hi)
            continue
        while lo < hi:
            mid = (lo + hi) // 2
            if recall_at(mid) >= float(t):
                hi = mid
            else:
                lo = mid + 1
        table.multipliers[key] = float(grid[lo])
        table.attained[key] = True
        table.mean_recalls[key] = recall_at(lo)
    return table
