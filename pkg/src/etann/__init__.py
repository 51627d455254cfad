"""Approximate nearest-neighbor search with declarative recall targets.

The package builds HNSW graph and IVF (inverted-file) indexes from
scratch, instruments their traversals with lightweight progress
counters, and stops each query early once a learned model predicts the
requested recall has been reached.  Alongside the adaptive policy it
ships the full supporting pipeline: exact ground truth, training-data
generation, a from-scratch gradient-boosted regressor, fixed-budget /
result-stability / learned-budget baselines, and an evaluation suite
with quality, tail-risk, and efficiency measures.
"""

from .baselines import (LaetTable, MULTIPLIER_GRID, RemTable,
                        build_rem_table, fixed_budget_search,
                        generate_budget_training_data, laet_search,
                        rem_search, train_budget_model,
                        tune_laet_multipliers)
from .data import (GroundTruth, NOISE_RULES, add_gaussian_noise,
                   brute_force_knn, load_vectors, make_gaussian_mixture,
                   read_bvecs, read_fvecs, read_ivecs,
                   split_learn_queries, squared_distances, write_fvecs,
                   write_ivecs)
from .errors import DataFormatError, InfeasibleTargetError
from .evaluation import (METHODS, MetricReport, OptimalityTable,
                         compute_metrics, grid_search_intervals,
                         optimal_termination, predictor_metrics,
                         run_queries)
from .features import (FEATURE_NAMES, N_FEATURES, extract_features,
                       read_observations, write_observations)
from .gbdt import GradientBoostedRegressor
from .hnsw import HnswIndex
from .ivf import IvfIndex
from .state import QueryOutcome, SearchState
from .termination import (AdaptiveTermination, RecallTargetConfig,
                          heuristic_intervals, next_interval,
                          run_recall_target_query)
from .traindata import (DEFAULT_TARGET_GRID, EffortTable, TrainingData,
                        generate_training_data, label_recall)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveTermination",
    "DEFAULT_TARGET_GRID",
    "DataFormatError",
    "EffortTable",
    "FEATURE_NAMES",
    "GradientBoostedRegressor",
    "GroundTruth",
    "HnswIndex",
    "InfeasibleTargetError",
    "IvfIndex",
    "LaetTable",
    "METHODS",
    "MULTIPLIER_GRID",
    "MetricReport",
    "N_FEATURES",
    "NOISE_RULES",
    "OptimalityTable",
    "QueryOutcome",
    "RecallTargetConfig",
    "RemTable",
    "SearchState",
    "TrainingData",
    "add_gaussian_noise",
    "brute_force_knn",
    "build_rem_table",
    "compute_metrics",
    "extract_features",
    "fixed_budget_search",
    "generate_budget_training_data",
    "generate_training_data",
    "grid_search_intervals",
    "heuristic_intervals",
    "label_recall",
    "laet_search",
    "load_vectors",
    "make_gaussian_mixture",
    "next_interval",
    "optimal_termination",
    "predictor_metrics",
    "read_bvecs",
    "read_fvecs",
    "read_ivecs",
    "read_observations",
    "rem_search",
    "run_queries",
    "run_recall_target_query",
    "split_learn_queries",
    "squared_distances",
    "train_budget_model",
    "tune_laet_multipliers",
    "write_fvecs",
    "write_ivecs",
    "write_observations",
]
