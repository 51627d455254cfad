"""Command-line pipeline driver.

Subcommands cover the whole workflow: synthesize or load vectors, build
an index, compute exact ground truth, perturb queries with noise,
generate predictor training data, train the recall model, answer
queries under a chosen termination method, benchmark methods against
each other, tune the REM/LAET baselines, run the interval ablation, and
pretty-print a benchmark summary.

Configuration precedence is flags > ``--config`` JSON > built-in
defaults, and every run writes a resolved-configuration JSON next to
its outputs (no wall-clock fields, so reruns are byte-identical).

Exit codes: 0 success, 2 usage/argument error, 3 data-format error,
4 infeasible recall target.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import data
from .baselines import (LaetTable, RemTable, build_rem_table,
                        generate_budget_training_data, train_budget_model,
                        tune_laet_multipliers)
from .errors import DataFormatError, InfeasibleTargetError
from .evaluation import (METHODS, compute_metrics, grid_search_intervals,
                         predictor_metrics, run_queries)
from .features import read_observations, write_observations
from .gbdt import GradientBoostedRegressor
from .hnsw import HnswIndex
from .ivf import IvfIndex
from .traindata import (DEFAULT_TARGET_GRID, EffortTable,
                        generate_training_data, label_recall)

REQUIRED = object()


class CliError(Exception):
    """Usage-level failure; carries the process exit code."""

    def __init__(self, message, code=2):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# configuration plumbing
# ---------------------------------------------------------------------------

def _load_config_file(path):
    if not os.path.exists(path):
        raise CliError(f"config file {path!r} does not exist")
    with open(path) as f:
        try:
            cfg = json.load(f)
        except json.JSONDecodeError as e:
            raise DataFormatError(f"{path}: not valid JSON ({e})") from e
    if not isinstance(cfg, dict):
        raise DataFormatError(f"{path}: config must be a JSON object")
    return cfg


def _resolve(args, spec):
    """Merge flag values over config-file values over defaults."""
    cfg = {}
    if getattr(args, "config", None):
        cfg = _load_config_file(args.config)
        unknown = sorted(set(cfg) - set(spec))
        if unknown:
            raise CliError(f"unknown config keys: {', '.join(unknown)}")
    resolved = {}
    missing = []
    for dest, default in spec.items():
        value = getattr(args, dest, None)
        if value is None:
            value = cfg.get(dest, default)
        if value is REQUIRED:
            missing.append("--" + dest.replace("_", "-"))
        else:
            resolved[dest] = value
    if missing:
        raise CliError("missing required options: " + ", ".join(missing))
    return resolved


def _write_resolved(target, command, resolved):
    """Drop the provenance JSON next to the command's primary output."""
    if os.path.isdir(target):
        path = os.path.join(target, f"resolved-config.{command}.json")
    else:
        path = target + ".config.json"
    payload = {"command": command}
    payload.update(sorted(resolved.items()))
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def _int_list(value, name):
    if isinstance(value, str):
        value = [v for v in value.split(",") if v]
    try:
        out = [int(v) for v in value]
    except (TypeError, ValueError):
        raise CliError(f"{name} must be a comma-separated integer list")
    if not out:
        raise CliError(f"{name} must not be empty")
    return out


def _float_list(value, name):
    if isinstance(value, str):
        value = [v for v in value.split(",") if v]
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError):
        raise CliError(f"{name} must be a comma-separated number list")
    if not out:
        raise CliError(f"{name} must not be empty")
    return out


# ---------------------------------------------------------------------------
# artifact loading with actionable errors
# ---------------------------------------------------------------------------

def _require(path, what, producer):
    if not os.path.exists(path):
        raise CliError(
            f"{what} {path!r} does not exist; produce it with "
            f"`etann {producer}`")
    return path


def _load_index(index_type, index_path, base_path):
    base = data.load_vectors(_require(base_path, "base vectors",
                                      "synth (or convert your dataset)"))
    _require(index_path, "index file", "build")
    if index_type == "hnsw":
        return HnswIndex.load(index_path, base), base
    if index_type == "ivf":
        return IvfIndex.load(index_path, base), base
    raise CliError(f"unknown index type {index_type!r}")


def _load_gt(ids_path, dists_path):
    return data.GroundTruth.load(_require(ids_path, "ground-truth ids", "gt"),
                                 _require(dists_path, "ground-truth "
                                          "distances", "gt"))


def _load_model(path):
    return GradientBoostedRegressor.load(_require(path, "model file",
                                                  "train"))


def _search_params(index_type, r):
    if index_type == "hnsw":
        return {"ef_search": r["ef_search"]}
    return {"nprobe": r["nprobe"]}


_WIDTH_SPEC = {"ef_search": 200, "nprobe": 100}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args):
    r = _resolve(args, dict(
        out_dir=REQUIRED, dim=128, components=32, seed=7,
        base_count=100_000, learn_count=5_000, test_count=1_000))
    os.makedirs(r["out_dir"], exist_ok=True)
    total = r["base_count"] + r["learn_count"] + r["test_count"]
    X = data.make_gaussian_mixture(total, r["dim"], r["components"],
                                   r["seed"])
    a = r["base_count"]
    b = a + r["learn_count"]
    data.write_fvecs(os.path.join(r["out_dir"], "base.fvecs"), X[:a])
    data.write_fvecs(os.path.join(r["out_dir"], "learn.fvecs"), X[a:b])
    data.write_fvecs(os.path.join(r["out_dir"], "test.fvecs"), X[b:])
    _write_resolved(r["out_dir"], "synth", r)
    print(f"wrote {a}/{r['learn_count']}/{r['test_count']} "
          f"base/learn/test vectors (dim {r['dim']}) to {r['out_dir']}")
    return 0


def cmd_build(args):
    r = _resolve(args, dict(
        index_type=REQUIRED, base=REQUIRED, out=REQUIRED, m=16,
        ef_construction=200, nlist=1000, max_iter=25,
        count_centroid_dists=True, seed=0))
    base = data.load_vectors(_require(r["base"], "base vectors",
                                      "synth (or convert your dataset)"))
    if r["index_type"] == "hnsw":
        index = HnswIndex(M=r["m"], ef_construction=r["ef_construction"],
                          random_state=r["seed"]).fit(base)
        stats = {"index_type": "hnsw", "m": r["m"],
                 "ef_construction": r["ef_construction"],
                 "max_level": index.max_level_,
                 "entry_point": index.entry_point_}
    elif r["index_type"] == "ivf":
        index = IvfIndex(n_clusters=r["nlist"], max_iter=r["max_iter"],
                         count_centroid_dists=bool(
                             r["count_centroid_dists"]),
                         random_state=r["seed"]).fit(base)
        stats = {"index_type": "ivf", "nlist": r["nlist"],
                 "lloyd_iterations": index.n_iter_}
    else:
        raise CliError(f"unknown index type {r['index_type']!r}")
    index.save(r["out"])
    stats.update(count=index.count_, dim=index.dim_, seed=r["seed"],
                 build_seconds=index.build_seconds_)
    with open(r["out"] + ".stats.json", "w") as f:
        json.dump(stats, f, indent=2, sort_keys=True)
        f.write("\n")
    _write_resolved(r["out"], "build", r)
    print(f"built {r['index_type']} index over {index.count_} vectors "
          f"in {index.build_seconds_:.1f}s -> {r['out']}")
    return 0


def cmd_gt(args):
    r = _resolve(args, dict(
        base=REQUIRED, queries=REQUIRED, k=100, out_ids=REQUIRED,
        out_dists=REQUIRED))
    base = data.load_vectors(_require(r["base"], "base vectors",
                                      "synth (or convert your dataset)"))
    queries = data.load_vectors(_require(r["queries"], "query vectors",
                                         "synth (or convert your dataset)"))
    gt = data.brute_force_knn(base, queries, r["k"])
    gt.save(r["out_ids"], r["out_dists"])
    _write_resolved(r["out_ids"], "gt", r)
    print(f"wrote exact top-{r['k']} ground truth for "
          f"{queries.shape[0]} queries")
    return 0


def cmd_noise(args):
    r = _resolve(args, dict(
        queries=REQUIRED, out=REQUIRED, noise_pct=REQUIRED, seed=0,
        rule="variance_norm"))
    queries = data.load_vectors(_require(r["queries"], "query vectors",
                                         "synth (or convert your dataset)"))
    noisy = data.add_gaussian_noise(queries, float(r["noise_pct"]),
                                    r["seed"], r["rule"])
    data.write_fvecs(r["out"], noisy)
    _write_resolved(r["out"], "noise", r)
    print(f"wrote {noisy.shape[0]} queries at noise "
          f"{float(r['noise_pct']):g} ({r['rule']})")
    return 0


def cmd_gentrain(args):
    r = _resolve(args, dict(
        index_type=REQUIRED, index=REQUIRED, base=REQUIRED,
        queries=REQUIRED, gt_ids=REQUIRED, gt_dists=REQUIRED, k=50,
        stride=1, workers=None, out_observations=REQUIRED,
        out_effort=REQUIRED, **_WIDTH_SPEC))
    index, _ = _load_index(r["index_type"], r["index"], r["base"])
    queries = data.load_vectors(_require(r["queries"], "query vectors",
                                         "synth (or convert your dataset)"))
    gt = _load_gt(r["gt_ids"], r["gt_dists"])
    workers = r["workers"] or os.cpu_count() or 1
    td = generate_training_data(
        index, queries, gt, r["k"],
        search_params=_search_params(r["index_type"], r),
        stride=r["stride"], workers=workers)
    write_observations(r["out_observations"], td.query_ids, td.features,
                       td.labels)
    td.effort_table().save(r["out_effort"])
    r["workers"] = workers
    _write_resolved(r["out_observations"], "gentrain", r)
    print(f"wrote {td.features.shape[0]} observations from "
          f"{queries.shape[0]} queries (stride {r['stride']}) and the "
          f"effort table")
    return 0


def cmd_train(args):
    r = _resolve(args, dict(
        observations=REQUIRED, out=REQUIRED, validation=None,
        n_estimators=100, learning_rate=0.1, max_depth=6,
        min_samples_leaf=20, max_bins=256, subsample=1.0, seed=0,
        clip=True))
    _require(r["observations"], "observation log", "gentrain")
    _, X, y = read_observations(r["observations"])
    if X.shape[0] == 0:
        raise CliError(f"observation log {r['observations']!r} is empty")
    model = GradientBoostedRegressor(
        n_estimators=r["n_estimators"], learning_rate=r["learning_rate"],
        max_depth=r["max_depth"], min_samples_leaf=r["min_samples_leaf"],
        max_bins=r["max_bins"], subsample=r["subsample"],
        clip_range=(0.0, 1.0) if r["clip"] else None,
        random_state=r["seed"])
    model.fit(X, y)
    model.save(r["out"])
    _write_resolved(r["out"], "train", r)
    print(f"trained on {X.shape[0]} rows; final training MSE "
          f"{model.train_scores_[-1]:.6f}")
    if r["validation"]:
        _, Xv, yv = read_observations(_require(r["validation"],
                                               "validation log", "gentrain"))
        mse, mae, r2 = predictor_metrics(model, Xv, yv)
        print(f"validation: MSE {mse:.6f}  MAE {mae:.6f}  R2 {r2:.4f}")
    return 0


def _outcome_csv(path, outcomes, gt, k):
    with open(path, "w") as f:
        cols = "query_id,terminated,ndis,predictor_calls,elapsed_us"
        f.write(cols + (",recall\n" if gt is not None else "\n"))
        for i, out in enumerate(outcomes):
            row = (f"{i},{out.terminated},{out.ndis},"
                   f"{out.predictor_calls},{out.elapsed * 1e6:.17g}")
            if gt is not None:
                row += f",{label_recall(out.ids, gt.ids[i], k):.17g}"
            f.write(row + "\n")


_METHOD_SPEC = dict(
    method=REQUIRED, recall_target=None, model=None, effort=None,
    rem_table=None, laet_model=None, laet_table=None, budget=None,
    strict=False)


def _method_kwargs(r):
    """Load whatever artifacts the chosen method needs, with errors that
    name the producing subcommand."""
    method = r["method"]
    kwargs = dict(recall_target=r["recall_target"], budget=r["budget"],
                  strict=bool(r["strict"]))
    if method == "adaptive":
        if not r["model"]:
            raise CliError("method adaptive needs --model (see `etann "
                           "train`)")
        if not r["effort"]:
            raise CliError("method adaptive needs --effort (see `etann "
                           "gentrain`)")
        if r["recall_target"] is None:
            raise CliError("method adaptive needs --recall-target")
        kwargs["model"] = _load_model(r["model"])
        kwargs["effort_table"] = EffortTable.load(
            _require(r["effort"], "effort table", "gentrain"))
    elif method == "fixed":
        if r["budget"] is None:
            if not r["effort"] or r["recall_target"] is None:
                raise CliError("method fixed needs --budget, or --effort "
                               "(see `etann gentrain`) plus "
                               "--recall-target")
            kwargs["effort_table"] = EffortTable.load(
                _require(r["effort"], "effort table", "gentrain"))
    elif method == "rem":
        if not r["rem_table"] or r["recall_target"] is None:
            raise CliError("method rem needs --rem-table (see `etann "
                           "tune-rem`) and --recall-target")
        kwargs["rem_table"] = RemTable.load(
            _require(r["rem_table"], "REM table", "tune-rem"))
    elif method == "laet":
        if not r["laet_model"] or not r["laet_table"] or \
                r["recall_target"] is None:
            raise CliError("method laet needs --laet-model and "
                           "--laet-table (see `etann tune-laet`) and "
                           "--recall-target")
        kwargs["laet_model"] = GradientBoostedRegressor.load(
            _require(r["laet_model"], "LAET model", "tune-laet"))
        kwargs["laet_table"] = LaetTable.load(
            _require(r["laet_table"], "LAET table", "tune-laet"))
    return kwargs


def cmd_search(args):
    r = _resolve(args, dict(
        index_type=REQUIRED, index=REQUIRED, base=REQUIRED,
        queries=REQUIRED, k=50, out=REQUIRED, gt_ids=None, gt_dists=None,
        workers=None, **_WIDTH_SPEC, **_METHOD_SPEC))
    index, _ = _load_index(r["index_type"], r["index"], r["base"])
    queries = data.load_vectors(_require(r["queries"], "query vectors",
                                         "synth (or convert your dataset)"))
    gt = None
    if r["gt_ids"] or r["gt_dists"]:
        if not (r["gt_ids"] and r["gt_dists"]):
            raise CliError("supply both --gt-ids and --gt-dists or neither")
        gt = _load_gt(r["gt_ids"], r["gt_dists"])
        if gt.ids.shape[0] != queries.shape[0]:
            raise CliError("ground truth does not align with the queries")
    workers = r["workers"] or os.cpu_count() or 1
    outcomes = run_queries(
        index, queries, r["k"], r["method"],
        search_params=_search_params(r["index_type"], r),
        workers=workers, **_method_kwargs(r))
    _outcome_csv(r["out"], outcomes, gt, r["k"])
    r["workers"] = workers
    _write_resolved(r["out"], "search", r)
    early = sum(1 for o in outcomes if o.terminated == "early")
    mean_ndis = sum(o.ndis for o in outcomes) / len(outcomes)
    print(f"answered {len(outcomes)} queries ({r['method']}); "
          f"{early} terminated early; mean ndis {mean_ndis:.1f}")
    return 0


_SUMMARY_COLUMNS = (
    "method", "recall_target", "k", "n_queries", "mean_recall", "rde",
    "rqut", "nrs", "nrs_reciprocal", "p99_error", "worst1_error",
    "mean_ndis", "median_ndis", "qps", "speedup",
)


def cmd_bench(args):
    r = _resolve(args, dict(
        index_type=REQUIRED, index=REQUIRED, base=REQUIRED,
        queries=REQUIRED, gt_ids=REQUIRED, gt_dists=REQUIRED, k=50,
        out_dir=REQUIRED, methods="adaptive,fixed,rem,laet,plain",
        recall_targets=REQUIRED, error_mode="one_sided", model=None,
        effort=None, rem_table=None, laet_model=None, laet_table=None,
        budget=None, strict=False, workers=None, **_WIDTH_SPEC))
    methods = r["methods"].split(",") if isinstance(r["methods"], str) \
        else list(r["methods"])
    for m in methods:
        if m not in METHODS:
            raise CliError(f"unknown method {m!r}; choose from {METHODS}")
    targets = _float_list(r["recall_targets"], "--recall-targets")
    index, _ = _load_index(r["index_type"], r["index"], r["base"])
    queries = data.load_vectors(_require(r["queries"], "query vectors",
                                         "synth (or convert your dataset)"))
    gt = _load_gt(r["gt_ids"], r["gt_dists"])
    if gt.ids.shape[0] != queries.shape[0]:
        raise CliError("ground truth does not align with the queries")
    os.makedirs(r["out_dir"], exist_ok=True)
    workers = r["workers"] or os.cpu_count() or 1
    params = _search_params(r["index_type"], r)

    plain = run_queries(index, queries, r["k"], "plain",
                        search_params=params, workers=workers)
    summary_rows = []
    for target in targets:
        for method in methods:
            rr = dict(r, method=method, recall_target=target)
            if method == "plain":
                outcomes = plain
            else:
                outcomes = run_queries(index, queries, r["k"], method,
                                       search_params=params,
                                       workers=workers,
                                       **_method_kwargs(rr))
            report = compute_metrics(outcomes, gt, target, plain,
                                     k=r["k"], error_mode=r["error_mode"])
            name = f"results_{method}_{target:.2f}.csv"
            report.to_csv(os.path.join(r["out_dir"], name))
            row = dict(report.summary())
            row["method"] = method
            summary_rows.append(row)
            print(f"{method:<9} R_t={target:.2f}  "
                  f"recall {report.mean_recall:.4f}  "
                  f"ndis {report.mean_ndis:9.1f}  "
                  f"rqut {report.rqut:.3f}  speedup {report.speedup:6.2f}")

    with open(os.path.join(r["out_dir"], "summary.csv"), "w") as f:
        f.write(",".join(_SUMMARY_COLUMNS) + "\n")
        for row in summary_rows:
            f.write(",".join(
                str(row[c]) if c == "method"
                else f"{row[c]:.17g}" for c in _SUMMARY_COLUMNS) + "\n")
    r["workers"] = workers
    _write_resolved(r["out_dir"], "bench", r)
    print(f"summary for {len(summary_rows)} runs -> "
          f"{os.path.join(r['out_dir'], 'summary.csv')}")
    return 0


def cmd_tune_rem(args):
    r = _resolve(args, dict(
        index_type=REQUIRED, index=REQUIRED, base=REQUIRED,
        queries=REQUIRED, gt_ids=REQUIRED, gt_dists=REQUIRED, k=50,
        ladder=REQUIRED, targets=REQUIRED, out=REQUIRED))
    index, _ = _load_index(r["index_type"], r["index"], r["base"])
    queries = data.load_vectors(_require(r["queries"], "query vectors",
                                         "synth (or convert your dataset)"))
    gt = _load_gt(r["gt_ids"], r["gt_dists"])
    ladder = _int_list(r["ladder"], "--ladder")
    targets = _float_list(r["targets"], "--targets")
    table = build_rem_table(index, queries, gt, r["k"], targets, ladder)
    table.save(r["out"])
    _write_resolved(r["out"], "tune-rem", r)
    unattained = sorted(key for key, ok in table.attained.items() if not ok)
    print(f"tuned {table.param} for {len(targets)} targets over ladder "
          f"{ladder}" + (f"; unattained: {unattained}" if unattained
                         else ""))
    return 0


def cmd_tune_laet(args):
    r = _resolve(args, dict(
        index_type=REQUIRED, index=REQUIRED, base=REQUIRED,
        queries=REQUIRED, gt_ids=REQUIRED, gt_dists=REQUIRED, k=50,
        effort=REQUIRED, targets=REQUIRED, out_model=REQUIRED,
        out_table=REQUIRED, n_estimators=100, learning_rate=0.1,
        max_depth=6, min_samples_leaf=20, seed=0, **_WIDTH_SPEC))
    index, _ = _load_index(r["index_type"], r["index"], r["base"])
    queries = data.load_vectors(_require(r["queries"], "query vectors",
                                         "synth (or convert your dataset)"))
    gt = _load_gt(r["gt_ids"], r["gt_dists"])
    targets = _float_list(r["targets"], "--targets")
    effort = EffortTable.load(_require(r["effort"], "effort table",
                                       "gentrain"))
    fixed_point = max(1, int(round(effort.effort_for(0.5))))
    params = _search_params(r["index_type"], r)
    X, y = generate_budget_training_data(index, queries, r["k"],
                                         fixed_point, params)
    model = train_budget_model(
        X, y, n_estimators=r["n_estimators"],
        learning_rate=r["learning_rate"], max_depth=r["max_depth"],
        min_samples_leaf=r["min_samples_leaf"], random_state=r["seed"])
    model.save(r["out_model"])
    table = tune_laet_multipliers(index, queries, gt, r["k"], model,
                                  fixed_point, targets, params)
    table.save(r["out_table"])
    _write_resolved(r["out_table"], "tune-laet", r)
    pairs = ", ".join(f"{key}->{table.multipliers[key]:.2f}"
                      for key in sorted(table.multipliers))
    print(f"fixed point {fixed_point}; multipliers {pairs}")
    return 0


def cmd_grid_intervals(args):
    r = _resolve(args, dict(
        index_type=REQUIRED, index=REQUIRED, base=REQUIRED,
        queries=REQUIRED, gt_ids=REQUIRED, gt_dists=REQUIRED, k=50,
        recall_target=REQUIRED, model=REQUIRED, ipi_grid=REQUIRED,
        mpi_grid=None, mode="adaptive", out=REQUIRED, **_WIDTH_SPEC))
    index, _ = _load_index(r["index_type"], r["index"], r["base"])
    queries = data.load_vectors(_require(r["queries"], "query vectors",
                                         "synth (or convert your dataset)"))
    gt = _load_gt(r["gt_ids"], r["gt_dists"])
    model = _load_model(r["model"])
    ipi_grid = _int_list(r["ipi_grid"], "--ipi-grid")
    if r["mode"] == "adaptive":
        if r["mpi_grid"] is None:
            raise CliError("adaptive mode needs --mpi-grid")
        mpi_grid = _int_list(r["mpi_grid"], "--mpi-grid")
    else:
        mpi_grid = ipi_grid
    result = grid_search_intervals(
        index, queries, gt, r["k"], float(r["recall_target"]), model,
        ipi_grid, mpi_grid, mode=r["mode"],
        search_params=_search_params(r["index_type"], r))
    payload = {
        "mode": r["mode"], "recall_target": float(r["recall_target"]),
        "feasible": result.feasible,
        "best": {"ipi": result.ipi, "mpi": result.mpi,
                 "mean_time": result.mean_time,
                 "mean_recall": result.mean_recall},
        "cells": result.cells,
    }
    with open(r["out"], "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")
    _write_resolved(r["out"], "grid-intervals", r)
    if not result.feasible:
        raise InfeasibleTargetError(
            f"no grid cell reached mean recall "
            f"{float(r['recall_target']):.2f} (best "
            f"{result.mean_recall:.4f} at ipi={result.ipi}, "
            f"mpi={result.mpi}); see {r['out']}")
    print(f"best cell ipi={result.ipi} mpi={result.mpi} "
          f"mean recall {result.mean_recall:.4f} "
          f"mean time {result.mean_time * 1e3:.3f} ms")
    return 0


def cmd_report(args):
    r = _resolve(args, dict(summary=REQUIRED))
    path = _require(r["summary"], "benchmark summary", "bench")
    with open(path) as f:
        header = f.readline().strip().split(",")
        rows = [line.strip().split(",") for line in f if line.strip()]
    if header != list(_SUMMARY_COLUMNS):
        raise DataFormatError(f"{path}: unexpected summary header")
    show = ("method", "recall_target", "mean_recall", "rde", "rqut",
            "nrs", "p99_error", "mean_ndis", "qps", "speedup")
    idx = [header.index(c) for c in show]
    widths = [max(len(c), 12) for c in show]
    line = "  ".join(f"{c:>{w}}" for c, w in zip(show, widths))
    print(line)
    print("-" * len(line))
    for row in rows:
        cells = []
        for c, j, w in zip(show, idx, widths):
            v = row[j]
            if c != "method":
                v = f"{float(v):.4f}" if abs(float(v)) < 1e4 \
                    else f"{float(v):.6g}"
            cells.append(f"{v:>{w}}")
        print("  ".join(cells))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(p, *names):
    for name in names:
        if name == "index":
            p.add_argument("--index-type", choices=("hnsw", "ivf"))
            p.add_argument("--index")
            p.add_argument("--base")
        elif name == "queries":
            p.add_argument("--queries")
        elif name == "gt":
            p.add_argument("--gt-ids")
            p.add_argument("--gt-dists")
        elif name == "k":
            p.add_argument("--k", type=int)
        elif name == "width":
            p.add_argument("--ef-search", type=int)
            p.add_argument("--nprobe", type=int)
        elif name == "workers":
            p.add_argument("--workers", type=int)
        elif name == "gbdt":
            p.add_argument("--n-estimators", type=int)
            p.add_argument("--learning-rate", type=float)
            p.add_argument("--max-depth", type=int)
            p.add_argument("--min-samples-leaf", type=int)
        elif name == "seed":
            p.add_argument("--seed", type=int)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="etann",
        description="Approximate nearest-neighbor search with per-query "
                    "declarative recall targets.")
    sub = parser.add_subparsers(dest="command", metavar="subcommand")

    def add(name, func, helptext):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="JSON config file; flags override")
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic clustered dataset")
    p.add_argument("--out-dir")
    p.add_argument("--dim", type=int)
    p.add_argument("--components", type=int)
    p.add_argument("--base-count", type=int)
    p.add_argument("--learn-count", type=int)
    p.add_argument("--test-count", type=int)
    _add_common(p, "seed")

    p = add("build", cmd_build, "build and persist an index")
    p.add_argument("--index-type", choices=("hnsw", "ivf"))
    p.add_argument("--base")
    p.add_argument("--out")
    p.add_argument("--m", type=int)
    p.add_argument("--ef-construction", type=int)
    p.add_argument("--nlist", type=int)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--count-centroid-dists",
                   action=argparse.BooleanOptionalAction)
    _add_common(p, "seed")

    p = add("gt", cmd_gt, "compute exact brute-force ground truth")
    p.add_argument("--base")
    p.add_argument("--out-ids")
    p.add_argument("--out-dists")
    _add_common(p, "queries", "k")

    p = add("noise", cmd_noise, "perturb queries with Gaussian noise")
    p.add_argument("--out")
    p.add_argument("--noise-pct", type=float)
    p.add_argument("--rule", choices=data.NOISE_RULES)
    _add_common(p, "queries", "seed")

    p = add("gentrain", cmd_gentrain,
            "generate recall-predictor training data + effort table")
    p.add_argument("--stride", type=int)
    p.add_argument("--out-observations")
    p.add_argument("--out-effort")
    _add_common(p, "index", "queries", "gt", "k", "width", "workers")

    p = add("train", cmd_train, "train the recall predictor")
    p.add_argument("--observations")
    p.add_argument("--validation")
    p.add_argument("--out")
    p.add_argument("--max-bins", type=int)
    p.add_argument("--subsample", type=float)
    p.add_argument("--clip", action=argparse.BooleanOptionalAction)
    _add_common(p, "gbdt", "seed")

    p = add("search", cmd_search, "answer queries under one method")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--recall-target", type=float)
    p.add_argument("--model")
    p.add_argument("--effort")
    p.add_argument("--rem-table")
    p.add_argument("--laet-model")
    p.add_argument("--laet-table")
    p.add_argument("--budget", type=int)
    p.add_argument("--strict", action=argparse.BooleanOptionalAction)
    p.add_argument("--out")
    _add_common(p, "index", "queries", "gt", "k", "width", "workers")

    p = add("bench", cmd_bench, "benchmark methods across recall targets")
    p.add_argument("--methods")
    p.add_argument("--recall-targets")
    p.add_argument("--error-mode", choices=("one_sided", "absolute"))
    p.add_argument("--model")
    p.add_argument("--effort")
    p.add_argument("--rem-table")
    p.add_argument("--laet-model")
    p.add_argument("--laet-table")
    p.add_argument("--budget", type=int)
    p.add_argument("--strict", action=argparse.BooleanOptionalAction)
    p.add_argument("--out-dir")
    _add_common(p, "index", "queries", "gt", "k", "width", "workers")

    p = add("tune-rem", cmd_tune_rem, "fit the recall-to-width table")
    p.add_argument("--ladder")
    p.add_argument("--targets")
    p.add_argument("--out")
    _add_common(p, "index", "queries", "gt", "k")

    p = add("tune-laet", cmd_tune_laet,
            "train + tune the learned-budget baseline")
    p.add_argument("--effort")
    p.add_argument("--targets")
    p.add_argument("--out-model")
    p.add_argument("--out-table")
    _add_common(p, "index", "queries", "gt", "k", "width", "gbdt", "seed")

    p = add("grid-intervals", cmd_grid_intervals,
            "grid-search the check intervals against the heuristic")
    p.add_argument("--recall-target", type=float)
    p.add_argument("--model")
    p.add_argument("--ipi-grid")
    p.add_argument("--mpi-grid")
    p.add_argument("--mode", choices=("adaptive", "static"))
    p.add_argument("--out")
    _add_common(p, "index", "queries", "gt", "k", "width")

    p = add("report", cmd_report, "pretty-print a benchmark summary")
    p.add_argument("--summary")

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return 2
    try:
        return args.func(args) or 0
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except DataFormatError as e:
        print(f"data format error: {e}", file=sys.stderr)
        return 3
    except InfeasibleTargetError as e:
        print(f"infeasible target: {e}", file=sys.stderr)
        return 4
    except FileNotFoundError as e:
        print(f"error: missing file: {e}", file=sys.stderr)
        return 2
    except (KeyError, TypeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
