"""Adaptive termination policy: interval arithmetic, the heuristic
seeding, and end-to-end behavior with hardwired and trained predictors."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from etann import (AdaptiveTermination, EffortTable, RecallTargetConfig,
                   heuristic_intervals, label_recall, next_interval,
                   run_recall_target_query)

from conftest import EF, K, NPROBE


class _Const:
    """Predictor stub returning a fixed recall estimate."""

    def __init__(self, value):
        self.value = value

    def predict_row(self, row):
        return self.value


def _table(effort):
    return EffortTable(np.array([0.9]), np.array([float(effort)]))


class TestNextInterval:
    def test_worked_substitutions(self):
        # gap 0.0 floors at mpi; gap 0.5 lands mid-range; gap 0.8 nearly
        # spans the whole range
        assert next_interval(1000, 100, 0.9, 0.9) == 100
        assert next_interval(1000, 100, 0.4, 0.9) == 550
        assert next_interval(1000, 100, 0.0, 0.8) == 820

    def test_negative_gap_clamps_to_floor(self):
        assert next_interval(1000, 100, 0.99, 0.9) == 100

    def test_full_gap_hits_ceiling(self):
        assert next_interval(1000, 100, 0.0, 1.0) == 1000

    @given(st.integers(1, 2000), st.integers(0, 8000),
           st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_always_within_band(self, mpi, extra, predicted, target):
        ipi = mpi + extra
        pi = next_interval(ipi, mpi, predicted, target)
        assert mpi <= pi <= ipi

    @given(st.integers(1, 2000), st.integers(0, 8000),
           st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_monotone_in_prediction(self, mpi, extra, target, p_lo, p_hi):
        ipi = mpi + extra
        lo, hi = sorted((p_lo, p_hi))
        # a more confident prediction never pushes the next check later
        assert next_interval(ipi, mpi, hi, target) <= \
            next_interval(ipi, mpi, lo, target)

    def test_dense_seeded_sweep(self):
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            mpi = int(rng.integers(1, 3000))
            ipi = mpi + int(rng.integers(0, 9000))
            pi = next_interval(ipi, mpi, float(rng.random()),
                               float(rng.random()))
            assert mpi <= pi <= ipi


class TestHeuristicIntervals:
    def test_worked_examples(self):
        assert heuristic_intervals(_table(5000), 0.9) == (2500, 500)
        assert heuristic_intervals(_table(7), 0.9) == (4, 1)

    def test_floor_at_one(self):
        assert heuristic_intervals(_table(1), 0.9) == (1, 1)

    def test_ratio_near_five(self):
        for effort in range(100, 10001, 137):
            ipi, mpi = heuristic_intervals(_table(effort), 0.9)
            assert 4.5 <= ipi / mpi <= 5.5

    def test_mpi_never_exceeds_ipi(self):
        for effort in range(1, 60):
            ipi, mpi = heuristic_intervals(_table(effort), 0.9)
            assert 1 <= mpi <= ipi


class TestRecallTargetConfig:
    def test_valid_construction(self):
        cfg = RecallTargetConfig(0.9, 500, 100)
        assert cfg.recall_target == 0.9

    @pytest.mark.parametrize("target", [0.0, -0.1, 1.01])
    def test_bad_target(self, target):
        with pytest.raises(ValueError, match="recall_target"):
            RecallTargetConfig(target, 500, 100)

    def test_target_of_one_allowed(self):
        RecallTargetConfig(1.0, 500, 100)

    def test_bad_intervals(self):
        with pytest.raises(ValueError, match=">= 1"):
            RecallTargetConfig(0.9, 0, 0)
        with pytest.raises(ValueError, match="exceeds"):
            RecallTargetConfig(0.9, 100, 500)

    def test_from_effort_table(self):
        cfg = RecallTargetConfig.from_effort_table(_table(5000), 0.9)
        assert (cfg.initial_interval, cfg.min_interval) == (2500, 500)

    def test_interval_scale(self):
        cfg = RecallTargetConfig.from_effort_table(_table(5000), 0.9,
                                                   interval_scale=0.5)
        assert (cfg.initial_interval, cfg.min_interval) == (1250, 250)


class TestPolicyOnScan:
    """The inverted-file scan checks the rule on the exact distance where
    the interval elapses, which makes stop positions predictable."""

    def test_confident_model_stops_at_first_check(self, ivf, test_queries):
        cfg = RecallTargetConfig(0.9, 40, 8)
        out = run_recall_target_query(ivf, test_queries[0], K,
                                      _Const(1.0), cfg,
                                      search_params={"nprobe": NPROBE})
        # 24 centroid distances also feed the interval counter, so the
        # check lands exactly when ndis reaches the initial interval
        assert out.ndis == 40
        assert out.terminated == "early"
        assert out.predictor_calls == 1

    def test_hopeless_model_runs_to_natural_end(self, ivf, test_queries):
        cfg = RecallTargetConfig(0.8, 100, 10)
        plain = ivf.search(test_queries[1], K, nprobe=NPROBE)
        out = run_recall_target_query(ivf, test_queries[1], K,
                                      _Const(0.0), cfg,
                                      search_params={"nprobe": NPROBE})
        np.testing.assert_array_equal(out.ids, plain.ids)
        assert out.ndis == plain.ndis
        assert out.terminated == "natural"

    def test_check_cadence_is_exact(self, ivf, test_queries):
        cfg = RecallTargetConfig(0.8, 100, 10)
        out = run_recall_target_query(ivf, test_queries[1], K,
                                      _Const(0.0), cfg,
                                      search_params={"nprobe": NPROBE})
        # after the first check every later one fires a fixed
        # round(10 + 90 * 0.8) = 82 distances later
        if out.ndis >= 100:
            assert out.predictor_calls == 1 + (out.ndis - 100) // 82
        else:
            assert out.predictor_calls == 0

    def test_out_of_range_predictions_are_clamped(self, ivf, test_queries):
        cfg = RecallTargetConfig(0.9, 40, 8)
        high = run_recall_target_query(ivf, test_queries[2], K,
                                       _Const(7.3), cfg,
                                       search_params={"nprobe": NPROBE})
        assert high.terminated == "early" and high.ndis == 40
        low = run_recall_target_query(ivf, test_queries[2], K,
                                      _Const(-3.0), cfg,
                                      search_params={"nprobe": NPROBE})
        assert low.terminated == "natural"


class TestPolicyOnGraph:
    def test_confident_model_overshoots_at_most_one_expansion(
            self, hnsw, test_queries):
        cfg = RecallTargetConfig(0.9, 60, 12)
        out = run_recall_target_query(hnsw, test_queries[0], K,
                                      _Const(1.0), cfg,
                                      search_params={"ef_search": EF})
        assert out.terminated == "early"
        assert out.predictor_calls == 1
        # boundary checks lag the interval by at most one node's worth of
        # neighbor evaluations (degree cap 2M at the base layer)
        assert 60 <= out.ndis <= 60 + 2 * 8

    def test_hopeless_model_matches_plain_search(self, hnsw, test_queries):
        cfg = RecallTargetConfig(0.8, 100, 10)
        for q in test_queries[:5]:
            plain = hnsw.search(q, K, ef_search=EF)
            out = run_recall_target_query(hnsw, q, K, _Const(0.0), cfg,
                                          search_params={"ef_search": EF})
            np.testing.assert_array_equal(out.ids, plain.ids)
            assert out.ndis == plain.ndis
            assert out.terminated == "natural"
            assert out.predictor_calls >= 1

    def test_dispatch_rejects_unknown_index(self):
        cfg = RecallTargetConfig(0.9, 10, 2)
        with pytest.raises(TypeError, match="unsupported"):
            run_recall_target_query(object(), np.zeros(4, np.float32), 5,
                                    _Const(1.0), cfg)


class TestTrainedPolicy:
    def test_early_stops_save_work_without_wrecking_recall(
            self, hnsw, hnsw_model, effort_table, test_queries, gt_test):
        cfg = RecallTargetConfig.from_effort_table(effort_table, 0.9)
        plain_nd, adapt_nd, recs, early = [], [], [], 0
        for i, q in enumerate(test_queries):
            plain = hnsw.search(q, K, ef_search=EF)
            out = run_recall_target_query(hnsw, q, K, hnsw_model, cfg,
                                          search_params={"ef_search": EF})
            assert out.ndis <= plain.ndis
            plain_nd.append(plain.ndis)
            adapt_nd.append(out.ndis)
            recs.append(label_recall(out.ids, gt_test.ids[i], K))
            early += out.terminated == "early"
        assert early >= len(test_queries) // 10
        assert np.mean(adapt_nd) < np.mean(plain_nd)
        assert np.mean(recs) >= 0.75

    def test_fresh_policy_state_per_query(self, hnsw_model):
        cfg = RecallTargetConfig(0.9, 500, 100)
        a = AdaptiveTermination(hnsw_model, cfg)
        b = AdaptiveTermination(hnsw_model, cfg)
        a.pi = 123
        assert b.pi == 500
