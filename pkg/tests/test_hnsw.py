"""Graph index: recall fidelity, traversal/counter semantics, hooks,
determinism, and the binary file format."""

import numpy as np
import pytest

from etann import (DataFormatError, HnswIndex, brute_force_knn, label_recall,
                   make_gaussian_mixture)

K = 10


class TestBuild:
    def test_fit_populates_attributes(self, hnsw, base):
        assert hnsw.count_ == base.shape[0]
        assert hnsw.dim_ == base.shape[1]
        assert hnsw.levels_.shape == (base.shape[0],)
        assert hnsw.max_level_ == int(hnsw.levels_.max())
        assert hnsw.levels_[hnsw.entry_point_] == hnsw.max_level_
        assert hnsw.build_seconds_ > 0.0

    def test_level_distribution_geometric(self, hnsw):
        # P(level >= 1) = 1/M for the exponential level rule
        frac = float((hnsw.levels_ >= 1).mean())
        assert frac == pytest.approx(1.0 / 8, abs=0.03)

    def test_degree_caps(self, hnsw):
        indptr, _ = hnsw._layers[0]
        degs = np.diff(indptr)
        assert degs.max() <= 2 * hnsw.M
        for lvl in range(1, hnsw.max_level_ + 1):
            indptr, _ = hnsw._layers[lvl]
            assert np.diff(indptr).max() <= hnsw.M

    def test_neighbor_lists_valid_and_loop_free(self, hnsw):
        for lvl, (indptr, indices) in hnsw._layers.items():
            assert indices.min() >= 0 and indices.max() < hnsw.count_
            # no self-loops
            owner = np.repeat(np.arange(indptr.shape[0] - 1),
                              np.diff(indptr))
            assert np.all(indices != owner[:indices.shape[0]] )
            # members of layer l all have level >= l
            assert np.all(hnsw.levels_[indices] >= lvl)

    def test_rebuild_identical(self, base):
        a = HnswIndex(M=8, ef_construction=40, random_state=5).fit(base)
        b = HnswIndex(M=8, ef_construction=40, random_state=5).fit(base)
        assert a.entry_point_ == b.entry_point_
        np.testing.assert_array_equal(a.levels_, b.levels_)
        for lvl in a._layers:
            np.testing.assert_array_equal(a._layers[lvl][1],
                                          b._layers[lvl][1])

    def test_param_validation(self, base):
        with pytest.raises(ValueError, match="M"):
            HnswIndex(M=1).fit(base)
        with pytest.raises(ValueError, match="ef_construction"):
            HnswIndex(M=8, ef_construction=4).fit(base)


class TestSearchQuality:
    def test_recall_against_brute_force(self, hnsw, test_queries, gt_test):
        recs = [label_recall(hnsw.search(q, K, ef_search=64).ids,
                             gt_test.ids[i], K)
                for i, q in enumerate(test_queries)]
        assert float(np.mean(recs)) >= 0.97

    def test_self_queries_return_self(self, hnsw, base):
        hits = 0
        for i in range(0, 1000, 10):
            out = hnsw.search(base[i], 1, ef_search=50)
            hits += (out.ids[0] == i and out.dists[0] == 0.0)
        assert hits >= 99

    def test_results_sorted_unique(self, hnsw, test_queries):
        out = hnsw.search(test_queries[0], K, ef_search=40)
        assert len(set(out.ids.tolist())) == K
        assert np.all(np.diff(out.dists) >= 0)

    def test_ef_monotone_recall(self, hnsw, test_queries, gt_test):
        means = []
        for ef in (K, 32, 96):
            recs = [label_recall(hnsw.search(q, K, ef_search=ef).ids,
                                 gt_test.ids[i], K)
                    for i, q in enumerate(test_queries)]
            means.append(float(np.mean(recs)))
        assert means[0] <= means[1] + 1e-9 <= means[2] + 2e-9

    def test_duplicate_vectors_tie_break(self):
        base = np.zeros((6, 3), dtype=np.float32)
        base[4:] = 1.0
        idx = HnswIndex(M=4, ef_construction=8, random_state=0).fit(base)
        out = idx.search(np.zeros(3, np.float32), 3, ef_search=8)
        assert out.ids.tolist() == [0, 1, 2]

    def test_kneighbors_matches_search(self, hnsw, test_queries):
        d, ids = hnsw.kneighbors(test_queries[:3], k=5, ef_search=32)
        for i in range(3):
            out = hnsw.search(test_queries[i], 5, ef_search=32)
            np.testing.assert_array_equal(ids[i], out.ids)
            np.testing.assert_allclose(d[i] ** 2, out.dists, rtol=1e-5)


class TestCountersAndHooks:
    def test_entry_distance_counts_once(self, hnsw, test_queries):
        seen = []

        def hook(state):
            seen.append((state.ndis, state.first_nn))
            return False

        hnsw.search(test_queries[0], K, ef_search=32, hook=hook)
        assert seen[0][0] == 1            # first hook right after the entry
        assert seen[0][1] >= 0.0          # firstNN set by then
        # ndis advances by exactly one per hook call
        assert [s[0] for s in seen] == list(range(1, len(seen) + 1))

    def test_first_nn_is_entry_distance(self, hnsw, base, test_queries):
        captured = []

        def hook(state):
            if not captured:
                captured.append((state.first_nn, state.last_id))
            return False

        q = test_queries[1]
        hnsw.search(q, K, ef_search=32, hook=hook)
        first_nn, entry_node = captured[0]
        d = float(((base[entry_node].astype(np.float64)
                    - q.astype(np.float64)) ** 2).sum())
        assert first_nn == pytest.approx(d, rel=1e-5)

    def test_identity_hooks_change_nothing(self, hnsw, test_queries):
        for q in test_queries[:5]:
            plain = hnsw.search(q, K, ef_search=32)
            hooked = hnsw.search(q, K, ef_search=32,
                                 hook=lambda s: False,
                                 boundary_hook=lambda s: False)
            np.testing.assert_array_equal(plain.ids, hooked.ids)
            assert plain.ndis == hooked.ndis
            assert plain.nstep == hooked.nstep
            assert plain.ninserts == hooked.ninserts
            assert hooked.terminated == "natural"

    def test_hook_stop_is_immediate(self, hnsw, test_queries):
        out = hnsw.search(test_queries[0], K, ef_search=32,
                          hook=lambda s: s.ndis >= 7)
        assert out.ndis == 7
        assert out.terminated == "early"

    def test_boundary_stop_lands_between_expansions(self, hnsw,
                                                    test_queries):
        plain = hnsw.search(test_queries[0], K, ef_search=32)
        nsteps = []

        def boundary(state):
            nsteps.append(state.nstep)
            return state.nstep >= 3   # stop after the 4th expansion closes

        out = hnsw.search(test_queries[0], K, ef_search=32,
                          boundary_hook=boundary)
        assert out.terminated == "early"
        assert out.nstep == 3
        assert out.ndis < plain.ndis
        # the boundary hook observes nstep before it is incremented
        assert nsteps[:4] == [0, 1, 2, 3]

    def test_nstep_counts_expansions(self, hnsw, test_queries):
        out = hnsw.search(test_queries[2], K, ef_search=32)
        assert 0 < out.nstep <= out.ndis

    def test_ninserts_bounds(self, hnsw, test_queries):
        out = hnsw.search(test_queries[3], K, ef_search=32)
        assert out.ninserts >= len(out.ids)
        assert out.ninserts <= out.ndis

    def test_strict_k_width(self, hnsw, test_queries):
        wide = hnsw.search(test_queries[0], 5, ef_search=64)
        narrow = hnsw.search(test_queries[0], 5, ef_search=64,
                             strict_k_width=True)
        # a width-5 beam gives up earlier than a width-64 one
        assert narrow.ndis <= wide.ndis

    def test_search_validation(self, hnsw):
        q = np.zeros(hnsw.dim_, np.float32)
        with pytest.raises(ValueError, match="ef_search"):
            hnsw.search(q, 10, ef_search=5)
        with pytest.raises(ValueError, match="k"):
            hnsw.search(q, 0)
        with pytest.raises(ValueError):
            hnsw.search(np.zeros(3, np.float32), 5, ef_search=16)
        with pytest.raises(RuntimeError, match="fit"):
            HnswIndex().search(q, 5)


class TestPersistence:
    def test_roundtrip(self, hnsw, base, test_queries, tmp_path):
        p = tmp_path / "g.idx"
        hnsw.save(p)
        back = HnswIndex.load(p, base)
        assert back.entry_point_ == hnsw.entry_point_
        assert back.max_level_ == hnsw.max_level_
        np.testing.assert_array_equal(back.levels_, hnsw.levels_)
        for q in test_queries[:5]:
            a = hnsw.search(q, K, ef_search=40)
            b = back.search(q, K, ef_search=40)
            np.testing.assert_array_equal(a.ids, b.ids)
            assert a.ndis == b.ndis

    def test_wrong_vectors_rejected(self, hnsw, base, tmp_path):
        p = tmp_path / "g.idx"
        hnsw.save(p)
        with pytest.raises(DataFormatError, match="1499"):
            HnswIndex.load(p, base[:-1])
        with pytest.raises(DataFormatError, match="x 11"):
            HnswIndex.load(p, np.ascontiguousarray(base[:, :-1]))

    def test_bad_magic(self, hnsw, base, tmp_path):
        p = tmp_path / "g.idx"
        hnsw.save(p)
        raw = bytearray(p.read_bytes())
        raw[:2] = b"zz"
        p.write_bytes(bytes(raw))
        with pytest.raises(DataFormatError, match="magic|not a"):
            HnswIndex.load(p, base)

    def test_truncation_rejected(self, hnsw, base, tmp_path):
        p = tmp_path / "g.idx"
        hnsw.save(p)
        raw = p.read_bytes()
        p.write_bytes(raw[: len(raw) - 10])
        with pytest.raises(DataFormatError):
            HnswIndex.load(p, base)

    def test_trailing_garbage_rejected(self, hnsw, base, tmp_path):
        p = tmp_path / "g.idx"
        hnsw.save(p)
        p.write_bytes(p.read_bytes() + b"xx")
        with pytest.raises(DataFormatError, match="trailing"):
            HnswIndex.load(p, base)
