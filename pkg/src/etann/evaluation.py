"""Search-quality measures, the per-query optimality oracle, the
interval grid search, and the benchmark query runner.

Measure definitions (the repo contract; RDE and NRS in the literature
are cited to external surveys, so the exact forms below are committed
here and used consistently):

* recall    — |returned top-k ∩ true top-k| / k.
* RDE       — mean over queries of the mean positional relative error
              (d_found - d_true) / max(d_true, 1e-12), in true (not
              squared) L2.
* RQUT      — fraction of queries with recall strictly below the target.
* NRS       — per query, ideal rank mass k(k+1)/2 divided by the rank
              sum of the returned ids in the full ground-truth ordering;
              ids absent from the ground truth get the rank their
              distance would occupy (binary search over the true
              distances). Report-level NRS is the mean; the reciprocal
              aggregates the achieved-over-ideal mass instead.
* error     — per query, max(0, target - recall) by default; the
              absolute form |target - recall| is available as a mode.
              P99 is its 99th percentile, Worst-1% the mean over the
              worst percentile of queries.
* QPS       — queries / summed single-thread query time.
* speedup   — plain mean query time / policy mean query time.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import fixed_budget_search, laet_search, rem_search
from .termination import RecallTargetConfig, run_recall_target_query
from .traindata import generate_training_data, label_recall
from .validation import check_positive_int, check_vectors

EPS = 1e-12

PER_QUERY_COLUMNS = (
    "query_id", "recall", "rde", "nrs", "error", "ndis", "nstep",
    "ninserts", "predictor_calls", "terminated", "elapsed_us",
)

METHODS = ("adaptive", "fixed", "rem", "laet", "plain")


@dataclass
class MetricReport:
    """Aggregate quality/performance measures plus per-query rows
    (columns as in PER_QUERY_COLUMNS; `terminated` is 1 for early)."""

    recall_target: float
    k: int
    n_queries: int
    mean_recall: float
    rde: float
    rqut: float
    nrs: float
    nrs_reciprocal: float
    p99_error: float
    worst1_error: float
    mean_ndis: float
    median_ndis: float
    qps: float
    speedup: float
    error_mode: str
    per_query: np.ndarray

    def to_csv(self, path):
        with open(path, "w") as f:
            f.write(",".join(PER_QUERY_COLUMNS) + "\n")
            for row in self.per_query:
                f.write(",".join(f"{v:.17g}" for v in row) + "\n")

    def summary(self):
        return {
            "recall_target": self.recall_target,
            "k": self.k,
            "n_queries": self.n_queries,
            "mean_recall": self.mean_recall,
            "rde": self.rde,
            "rqut": self.rqut,
            "nrs": self.nrs,
            "nrs_reciprocal": self.nrs_reciprocal,
            "p99_error": self.p99_error,
            "worst1_error": self.worst1_error,
            "mean_ndis": self.mean_ndis,
            "median_ndis": self.median_ndis,
            "qps": self.qps,
            "speedup": self.speedup,
        }

    def __str__(self):
        lines = [f"{'measure':<16}{'value':>14}"]
        for key, val in self.summary().items():
            if isinstance(val, float):
                lines.append(f"{key:<16}{val:>14.6f}")
            else:
                lines.append(f"{key:<16}{val:>14}")
        return "\n".join(lines)


def compute_metrics(outcomes, gt, recall_target, plain_outcomes=None, *,
                    k, error_mode="one_sided"):
    """Score a batch of outcomes against ground truth. Pure: permuting
    the (outcomes, gt-rows) pairs permutes only the per-query rows."""
    n = len(outcomes)
    if n == 0:
        raise ValueError("no outcomes to score")
    if gt.ids.shape[0] != n:
        raise ValueError(
            f"{n} outcomes but {gt.ids.shape[0]} ground-truth rows")
    if gt.ids.shape[1] < k:
        raise ValueError(
            f"ground truth depth {gt.ids.shape[1]} is shallower than k={k}")
    if error_mode not in ("one_sided", "absolute"):
        raise ValueError(f"unknown error_mode {error_mode!r}")
    if plain_outcomes is not None and len(plain_outcomes) != n:
        raise ValueError("plain_outcomes misaligned with outcomes")

    ideal_mass = k * (k + 1) / 2.0
    rows = np.empty((n, len(PER_QUERY_COLUMNS)), dtype=np.float64)
    for i, out in enumerate(outcomes):
        gt_ids_full = gt.ids[i]
        gt_true_full = np.sqrt(gt.dists[i])
        pos_of = {int(v): p for p, v in enumerate(gt_ids_full)}
        found = out.ids
        found_true = np.sqrt(out.dists)

        rec = label_recall(found, gt_ids_full, k)
        m = min(found.shape[0], k)
        if m:
            dt = gt_true_full[:m]
            rde_q = float(np.mean((found_true[:m] - dt)
                                  / np.maximum(dt, EPS)))
        else:
            rde_q = math.inf
        rank_sum = 0.0
        for j in range(found.shape[0]):
            p = pos_of.get(int(found[j]))
            if p is None:
                p = int(np.searchsorted(gt_true_full, found_true[j],
                                        side="left"))
            rank_sum += p + 1
        nrs_q = ideal_mass / rank_sum if rank_sum > 0 else math.inf
        err = recall_target - rec
        err_q = abs(err) if error_mode == "absolute" else max(0.0, err)
        rows[i] = (i, rec, rde_q, nrs_q, err_q, out.ndis, out.nstep,
                   out.ninserts, out.predictor_calls,
                   1.0 if out.terminated == "early" else 0.0,
                   out.elapsed * 1e6)

    recalls = rows[:, 1]
    errors = rows[:, 4]
    ndis = rows[:, 5]
    total_time = sum(o.elapsed for o in outcomes)
    n_worst = max(1, math.ceil(n / 100))
    worst = np.sort(errors)[::-1][:n_worst]
    if plain_outcomes is None:
        speedup = math.nan
    else:
        # same summation path on both sides so that scoring a run against
        # itself yields exactly 1.0
        plain_time = sum(o.elapsed for o in plain_outcomes)
        speedup = plain_time / max(total_time, EPS)
    return MetricReport(
        recall_target=float(recall_target),
        k=int(k),
        n_queries=n,
        mean_recall=float(recalls.mean()),
        rde=float(rows[:, 2].mean()),
        rqut=float((recalls < recall_target).mean()),
        nrs=float(rows[:, 3].mean()),
        nrs_reciprocal=float((1.0 / rows[:, 3]).mean()),
        p99_error=float(np.percentile(errors, 99)),
        worst1_error=float(worst.mean()),
        mean_ndis=float(ndis.mean()),
        median_ndis=float(np.median(ndis)),
        qps=n / max(total_time, EPS),
        speedup=float(speedup),
        error_mode=error_mode,
        per_query=rows,
    )


# ---------------------------------------------------------------------------
# optimality oracle
# ---------------------------------------------------------------------------

@dataclass
class OptimalityTable:
    """Per-query, per-target first-crossing efforts under plain search.
    Unreached targets are flagged in ``reached`` and charged the natural
    effort in ``optimal_ndis``."""

    targets: np.ndarray
    optimal_ndis: np.ndarray
    reached: np.ndarray
    natural_ndis: np.ndarray

    def mean_optimal(self, target):
        idx = np.flatnonzero(np.isclose(self.targets, round(float(target), 2),
                                        atol=1e-9))
        if idx.size == 0:
            raise KeyError(f"target {target!r} not in optimality table")
        return float(self.optimal_ndis[:, idx[0]].mean())

    def to_csv(self, path):
        with open(path, "w") as f:
            f.write("query_id,target,optimal_ndis,reached\n")
            for q in range(self.optimal_ndis.shape[0]):
                for t in range(self.targets.shape[0]):
                    f.write(f"{q},{self.targets[t]:.2f},"
                            f"{self.optimal_ndis[q, t]},"
                            f"{int(self.reached[q, t])}\n")


def optimal_termination(index, queries, gt, k, targets,
                        search_params=None, workers=1):
    """Instrument one plain pass per query, tracking running recall at
    every result update, and record the first ndis at which each target
    was met. This is the per-query floor any termination policy is
    compared against."""
    td = generate_training_data(
        index, queries, gt, k, search_params=search_params,
        stride=1_000_000_000, targets=np.asarray(targets, float),
        workers=workers)
    return OptimalityTable(td.targets, td.crossings, td.reached,
                           td.natural_ndis)


# ---------------------------------------------------------------------------
# interval ablation
# ---------------------------------------------------------------------------

@dataclass
class GridSearchResult:
    ipi: int
    mpi: int
    mean_time: float
    mean_recall: float
    feasible: bool
    cells: list = field(default_factory=list)


def grid_search_intervals(index, queries, gt, k, recall_target, model,
                          ipi_grid, mpi_grid, mode="adaptive",
                          search_params=None):
    """Exhaustive (ipi, mpi) ablation: fastest cell whose mean recall
    meets the target. ``static`` mode pins mpi = ipi, ablating away the
    adaptive schedule. With no feasible cell the result carries the
    best-recall cell and feasible=False."""
    queries = check_vectors(queries, "queries")
    if mode not in ("adaptive", "static"):
        raise ValueError(f"unknown mode {mode!r}")
    ipi_grid = sorted(int(v) for v in ipi_grid)
    mpi_grid = sorted(int(v) for v in mpi_grid)
    if not ipi_grid or (mode == "adaptive" and not mpi_grid):
        raise ValueError("interval grids must be non-empty")
    if mode == "static":
        cells = [(ipi, ipi) for ipi in ipi_grid]
    else:
        cells = [(ipi, mpi) for ipi in ipi_grid for mpi in mpi_grid
                 if mpi <= ipi]
        if not cells:
            raise ValueError("no grid cell satisfies mpi <= ipi")

    results = []
    for ipi, mpi in cells:
        config = RecallTargetConfig(recall_target, ipi, mpi)
        recs = 0.0
        times = 0.0
        for i in range(queries.shape[0]):
            out = run_recall_target_query(index, queries[i], k, model,
                                          config, search_params)
            recs += label_recall(out.ids, gt.ids[i], k)
            times += out.elapsed
        results.append({
            "ipi": ipi, "mpi": mpi,
            "mean_recall": recs / queries.shape[0],
            "mean_time": times / queries.shape[0],
        })

    feasible = [c for c in results if c["mean_recall"] >= recall_target]
    if feasible:
        best = min(feasible, key=lambda c: c["mean_time"])
        return GridSearchResult(best["ipi"], best["mpi"], best["mean_time"],
                                best["mean_recall"], True, results)
    best = max(results, key=lambda c: c["mean_recall"])
    return GridSearchResult(best["ipi"], best["mpi"], best["mean_time"],
                            best["mean_recall"], False, results)


# ---------------------------------------------------------------------------
# predictor quality
# ---------------------------------------------------------------------------

def predictor_metrics(model, features, labels):
    """(MSE, MAE, R²) of the model on a validation log. R² is NaN when
    the labels have zero variance (undefined by construction)."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if labels.size == 0:
        raise ValueError("validation log is empty")
    pred = model.predict(features)
    resid = pred - labels
    mse = float(np.mean(resid ** 2))
    mae = float(np.mean(np.abs(resid)))
    ss_tot = float(np.sum((labels - labels.mean()) ** 2))
    r2 = math.nan if ss_tot == 0.0 else 1.0 - float(
        np.sum(resid ** 2)) / ss_tot
    return mse, mae, r2


# ---------------------------------------------------------------------------
# benchmark runner
# ---------------------------------------------------------------------------

def run_queries(index, queries, k, method, search_params=None, *,
                model=None, recall_target=None, effort_table=None,
                rem_table=None, laet_model=None, laet_table=None,
                budget=None, config=None, strict=False, workers=1):
    """Answer every query under one termination method and return the
    outcomes in query order.

    Method requirements: ``adaptive`` needs model + (config or
    effort_table + recall_target); ``fixed`` needs budget or
    effort_table + recall_target; ``rem`` needs rem_table +
    recall_target; ``laet`` needs laet_model + laet_table +
    recall_target; ``plain`` needs nothing extra.
    """
    queries = check_vectors(queries, "queries")
    check_positive_int(k, "k", 1)
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    params = dict(search_params or {})

    if method == "adaptive":
        if model is None:
            raise ValueError("adaptive method requires a trained model")
        if config is None:
            if effort_table is None or recall_target is None:
                raise ValueError("adaptive method requires a config, or an "
                                 "effort table plus recall target")
            config = RecallTargetConfig.from_effort_table(
                effort_table, recall_target)

        def one(q):
            return run_recall_target_query(index, q, k, model, config,
                                           params)
    elif method == "fixed":
        if budget is None:
            if effort_table is None or recall_target is None:
                raise ValueError("fixed method requires a budget, or an "
                                 "effort table plus recall target")
            budget = max(1, int(round(effort_table.effort_for(
                recall_target))))

        def one(q):
            return fixed_budget_search(index, q, k, budget, params)
    elif method == "rem":
        if rem_table is None or recall_target is None:
            raise ValueError("rem method requires rem_table + recall target")

        def one(q):
            return rem_search(index, q, k, rem_table, recall_target,
                              params, strict=strict)
    elif method == "laet":
        if laet_model is None or laet_table is None or recall_target is None:
            raise ValueError(
                "laet method requires laet_model + laet_table + recall "
                "target")
        multiplier = laet_table.multiplier_for(recall_target, strict=strict)
        fixed_point = laet_table.fixed_point

        def one(q):
            return laet_search(index, q, k, laet_model, fixed_point,
                               multiplier, params)
    else:
        def one(q):
            return index.search(q, k, **params)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, (queries[i]
                                       for i in range(queries.shape[0]))))
    return [one(queries[i]) for i in range(queries.shape[0])]
