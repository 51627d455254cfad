"""SearchState bookkeeping and the 11-feature observation vector."""

import numpy as np
import pytest

from etann import (FEATURE_NAMES, N_FEATURES, SearchState, extract_features,
                   read_observations, write_observations)
from etann.features import OBSERVATION_COLUMNS


def _filled_state(k=3, width=5, pairs=((4.0, 7), (1.0, 2), (9.0, 1))):
    st = SearchState(k, width)
    st.first_nn = pairs[0][0]
    for d, i in pairs:
        st.count_distance(d, i)
        st.insert(d, i)
    return st


class TestSearchState:
    def test_width_below_k_rejected(self):
        with pytest.raises(ValueError):
            SearchState(5, 3)

    def test_result_sorted_by_dist_then_id(self):
        st = _filled_state(pairs=((4.0, 7), (1.0, 2), (4.0, 3), (9.0, 1)))
        assert st.result == [(1.0, 2), (4.0, 3), (4.0, 7), (9.0, 1)]

    def test_counters(self):
        st = _filled_state()
        assert st.ndis == 3 and st.idis == 3 and st.ninserts == 3
        assert st.last_id == 1 and st.last_dist == 9.0

    def test_width_cap_evicts_worst(self):
        st = SearchState(1, 2)
        st.first_nn = 5.0
        for d, i in ((5.0, 0), (3.0, 1), (4.0, 2)):
            st.count_distance(d, i)
            if st.admits(d, i):
                st.insert(d, i)
        assert st.result == [(3.0, 1), (4.0, 2)]

    def test_admits_rejects_at_capacity(self):
        st = _filled_state(k=2, width=3)
        assert not st.admits(10.0, 99)       # beyond current worst
        assert st.admits(0.5, 99)
        assert not st.admits(9.0, 5)         # ties with worst (9.0, 1)? id 5 > 1
        assert st.admits(9.0, 0)             # same dist, lower id wins

    def test_insert_reports_rank_and_displaced(self):
        st = SearchState(2, 4)
        st.first_nn = 1.0
        for d, i in ((1.0, 10), (2.0, 11), (3.0, 12)):
            st.count_distance(d, i)
            st.insert(d, i)
        # new best-in-topk arrival pushes id 11 out of the top-2
        st.count_distance(1.5, 13)
        st.insert(1.5, 13)
        assert st.last_rank == 1
        assert st.last_displaced == 11

    def test_insert_outside_topk_displaces_nothing(self):
        st = SearchState(2, 4)
        st.first_nn = 1.0
        for d, i in ((1.0, 10), (2.0, 11), (3.0, 12)):
            st.count_distance(d, i)
            st.insert(d, i)
        st.count_distance(2.5, 13)
        st.insert(2.5, 13)
        assert st.last_rank == 2
        assert st.last_displaced == -1

    def test_count_distance_clears_insert_markers(self):
        st = _filled_state()
        st.count_distance(99.0, 42)
        assert st.last_rank == -1 and st.last_displaced == -1

    def test_outcome_truncates_to_k(self):
        st = _filled_state(k=2, width=4)
        out = st.outcome("natural", elapsed=0.5)
        assert out.ids.tolist() == [2, 7]
        np.testing.assert_allclose(out.dists, [1.0, 4.0])
        assert out.terminated == "natural" and out.elapsed == 0.5
        assert out.ndis == 3 and out.ninserts == 3


class TestFeatures:
    def test_names_and_count(self):
        assert N_FEATURES == 11
        assert FEATURE_NAMES == (
            "nstep", "ndis", "ninserts", "firstNN", "closestNN",
            "furthestNN", "avg", "var", "med", "perc25", "perc75")
        assert OBSERVATION_COLUMNS[0] == "query_id"
        assert OBSERVATION_COLUMNS[-1] == "recall"

    def test_known_quartet(self):
        """Top-k distances {1,2,3,4}: textbook population statistics and
        linear-interpolation percentiles, worked by hand."""
        st = SearchState(4, 4)
        st.first_nn = 3.0
        st.nstep = 6
        for d, i in ((3.0, 0), (1.0, 1), (4.0, 2), (2.0, 3)):
            st.count_distance(d, i)
            st.insert(d, i)
        row = extract_features(st)
        expect = {
            "nstep": 6, "ndis": 4, "ninserts": 4, "firstNN": 3.0,
            "closestNN": 1.0, "furthestNN": 4.0, "avg": 2.5, "var": 1.25,
            "med": 2.5, "perc25": 1.75, "perc75": 3.25,
        }
        for name, val in expect.items():
            assert row[FEATURE_NAMES.index(name)] == pytest.approx(val)

    def test_singleton(self):
        st = SearchState(3, 3)
        st.first_nn = 7.0
        st.count_distance(7.0, 9)
        st.insert(7.0, 9)
        row = extract_features(st)
        assert row[FEATURE_NAMES.index("var")] == 0.0
        for name in ("closestNN", "furthestNN", "avg", "med", "perc25",
                     "perc75"):
            assert row[FEATURE_NAMES.index(name)] == 7.0

    def test_truncates_to_k_not_width(self):
        st = SearchState(2, 4)
        st.first_nn = 1.0
        for d, i in ((1.0, 0), (2.0, 1), (30.0, 2), (40.0, 3)):
            st.count_distance(d, i)
            st.insert(d, i)
        row = extract_features(st)
        assert row[FEATURE_NAMES.index("furthestNN")] == 2.0
        assert row[FEATURE_NAMES.index("avg")] == 1.5

    def test_empty_result_rejected(self):
        st = SearchState(2, 2)
        with pytest.raises(RuntimeError, match="empty result"):
            extract_features(st)

    def test_uninitialized_first_nn_rejected(self):
        st = SearchState(2, 2)
        st.result.append((1.0, 0))
        with pytest.raises(RuntimeError, match="firstNN"):
            extract_features(st)

    def test_does_not_mutate_state(self):
        st = _filled_state()
        before = (st.ndis, st.idis, list(st.result), st.predictor_calls)
        extract_features(st)
        assert (st.ndis, st.idis, list(st.result), st.predictor_calls) == before

    def test_matches_naive_recompute_on_live_search(self, hnsw, test_queries):
        """Replay real searches and recompute every feature from the raw
        state with independent numpy calls."""
        rows = []

        def hook(state):
            if state.result:
                got = extract_features(state)
                top = np.array([t[0] for t in state.result[:state.k]])
                ref = np.array([
                    state.nstep, state.ndis, state.ninserts, state.first_nn,
                    top.min(), top.max(), top.mean(), top.var(),
                    np.percentile(top, 50), np.percentile(top, 25),
                    np.percentile(top, 75)])
                rows.append((got, ref))
            return False

        for q in test_queries[:5]:
            hnsw.search(q, 10, ef_search=32, hook=hook)
        assert rows
        for got, ref in rows:
            np.testing.assert_allclose(got, ref, rtol=1e-12, atol=0)


class TestObservationLog:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((17, N_FEATURES))
        y = rng.random(17)
        qid = rng.integers(0, 5, 17)
        p = tmp_path / "obs.csv"
        write_observations(p, qid, X, y)
        qid2, X2, y2 = read_observations(p)
        np.testing.assert_array_equal(qid2, qid)
        np.testing.assert_array_equal(X2, X)   # 17 significant digits
        np.testing.assert_array_equal(y2, y)

    def test_header_checked(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b,c\n1,2,3\n")
        from etann import DataFormatError
        with pytest.raises(DataFormatError, match="header"):
            read_observations(p)

    def test_alignment_checked(self, tmp_path):
        with pytest.raises(ValueError, match="align"):
            write_observations(tmp_path / "x.csv", [0, 1],
                              np.zeros((3, N_FEATURES)), [0.0, 0.0, 0.0])

    def test_wrong_width_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_observations(tmp_path / "x.csv", [0], np.zeros((1, 3)),
                              [0.0])
