"""Hierarchical navigable small-world index over squared-L2 distance.

Construction runs through the numba kernels in _hnsw_build; every
query-time traversal — plain, instrumented, or policy-driven — runs
through the single `_base_search` loop here so that counters, hooks and
termination behave identically no matter who is driving.

Counter semantics, used everywhere downstream:

* ``ndis``   — number of point-to-query distance evaluations at the base
  layer. The entry point's distance counts as the first one; upper-layer
  greedy descent is free.
* ``nstep``  — number of *completed* candidate expansions.
* ``ninserts`` — number of insertions into the result set.

Tie-breaking is lexicographic on (distance, id): the lower id wins.
"""

from __future__ import annotations

import struct
from heapq import heappop, heappush
from time import perf_counter

import numpy as np
from sklearn.base import BaseEstimator

from ._hnsw_build import build_graph
from .errors import DataFormatError
from .state import QueryOutcome, SearchState
from .validation import check_positive_int, check_query, check_vectors

_MAGIC = b"ETHNSW01"
_VERSION = 1


def _to_csr(nbrs, degs):
    """Pack fixed-capacity adjacency rows (padded with -1) into CSR."""
    indptr = np.zeros(degs.shape[0] + 1, dtype=np.int64)
    np.cumsum(degs, out=indptr[1:])
    indices = nbrs[nbrs >= 0]
    if indices.size != indptr[-1]:
        raise RuntimeError("adjacency rows are inconsistent with degrees")
    return indptr, np.ascontiguousarray(indices, dtype=np.int32)


class HnswIndex(BaseEstimator):
    """Graph index answering k-nearest-neighbor queries in squared L2.

    Parameters
    ----------
    M : int, default=16
        Maximum out-degree on the upper layers; layer 0 allows 2*M.
    ef_construction : int, default=200
        Beam width used while inserting points at build time.
    random_state : int, default=0
        Seed for the geometric level draws. Builds are fully
        deterministic given (data, parameters, seed).
    """

    def __init__(self, M=16, ef_construction=200, random_state=0):
        self.M = M
        self.ef_construction = ef_construction
        self.random_state = random_state

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------

    def fit(self, X, y=None):
        X = check_vectors(X, "X")
        if X.shape[0] < 1:
            raise ValueError("need at least one vector to build an index")
        check_positive_int(self.M, "M", 2)
        check_positive_int(self.ef_construction, "ef_construction", self.M)

        rng = np.random.default_rng(self.random_state)
        u = rng.random(X.shape[0])
        m_l = 1.0 / np.log(self.M)
        levels = np.floor(-np.log(np.clip(u, 1e-300, None)) * m_l)
        levels = levels.astype(np.int64)

        t0 = perf_counter()
        nbr0, deg0, nbru, degu, entry = build_graph(
            X, levels, self.M, self.ef_construction)
        self.build_seconds_ = perf_counter() - t0

        self._vectors = X
        self.count_ = int(X.shape[0])
        self.dim_ = int(X.shape[1])
        self.levels_ = levels.astype(np.int32)
        self.entry_point_ = int(entry)
        self.max_level_ = int(levels.max())
        layers = {0: _to_csr(nbr0, deg0)}
        for l in range(1, self.max_level_ + 1):
            layers[l] = _to_csr(nbru[:, l - 1, :], degu[:, l - 1])
        self._layers = layers
        return self

    def _check_fitted(self):
        if not hasattr(self, "_layers"):
            raise RuntimeError("index is not built; call fit() or load()")

    # ------------------------------------------------------------------
    # traversal
    # ------------------------------------------------------------------

    def _descend(self, q):
        """Greedy width-1 descent through the upper layers. These hops do
        not count toward ndis; the returned distance is re-counted by the
        base layer as the first evaluation."""
        vecs = self._vectors
        cur = self.entry_point_
        diff = vecs[cur] - q
        d_cur = float(np.dot(diff, diff))
        for l in range(self.max_level_, 0, -1):
            indptr, indices = self._layers[l]
            while True:
                nbrs = indices[indptr[cur]:indptr[cur + 1]]
                if nbrs.size == 0:
                    break
                diff = vecs[nbrs] - q
                d = np.einsum("ij,ij->i", diff, diff)
                d_min = d.min()
                if d_min < d_cur:
                    cur = int(nbrs[d == d_min].min())
                    d_cur = float(d_min)
                else:
                    break
        return cur, d_cur

    def _base_search(self, q, k, width, hook=None, boundary_hook=None):
        """Best-first search at the base layer.

        ``hook(state)`` fires after every counted distance; returning a
        truthy value stops the search immediately. ``boundary_hook(state)``
        fires after each candidate expansion, before nstep is bumped, and
        may stop the search the same way. Both stops report ``"early"``;
        exhausting the frontier reports ``"natural"``.
        """
        vecs = self._vectors
        indptr, indices = self._layers[0]
        state = SearchState(k, width)
        visited = np.zeros(self.count_, dtype=bool)

        cur, d_cur = self._descend(q)
        visited[cur] = True
        state.count_distance(d_cur, cur)
        state.first_nn = d_cur
        state.insert(d_cur, cur)
        if hook is not None and hook(state):
            return state, "early"

        frontier = [(d_cur, cur)]
        result = state.result
        while frontier:
            d_c, c = heappop(frontier)
            if len(result) >= width and d_c > result[-1][0]:
                break
            nbrs = indices[indptr[c]:indptr[c + 1]]
            fresh = nbrs[~visited[nbrs]]
            if fresh.size:
                visited[fresh] = True
                diff = vecs[fresh] - q
                dists = np.einsum("ij,ij->i", diff, diff)
                for d, node in zip(dists.tolist(), fresh.tolist()):
                    state.count_distance(d, node)
                    if state.admits(d, node):
                        state.insert(d, node)
                        heappush(frontier, (d, node))
                    if hook is not None and hook(state):
                        return state, "early"
            if boundary_hook is not None and boundary_hook(state):
                return state, "early"
            state.nstep += 1
        return state, "natural"

    # ------------------------------------------------------------------
    # public queries
    # ------------------------------------------------------------------

    def search(self, query, k, ef_search=None, hook=None,
               boundary_hook=None, strict_k_width=False):
        """Run one query and return its full QueryOutcome.

        With ``strict_k_width`` the working result set is capped at k
        instead of max(k, ef_search); the default matches the usual
        beam-search behavior where ef_search widens the frontier.
        """
        self._check_fitted()
        q = check_query(query, self.dim_, "query")
        check_positive_int(k, "k", 1)
        if k > self.count_:
            raise ValueError(
                f"k={k} exceeds the number of indexed vectors ({self.count_})")
        ef = k if ef_search is None else ef_search
        check_positive_int(ef, "ef_search", 1)
        if ef < k:
            raise ValueError(f"ef_search={ef} must be >= k={k}")
        width = k if strict_k_width else max(k, ef)
        t0 = perf_counter()
        state, reason = self._base_search(q, k, width, hook, boundary_hook)
        return state.outcome(reason, perf_counter() - t0)

    def kneighbors(self, X, k=10, ef_search=None):
        """Plain batch search. Returns (distances, ids) with true (not
        squared) L2 distances, float64, shaped (n_queries, k). Slots that
        could not be filled hold inf / -1."""
        self._check_fitted()
        Q = check_vectors(X, "X")
        if Q.shape[1] != self.dim_:
            raise ValueError(
                f"X has dim {Q.shape[1]}, index has dim {self.dim_}")
        dists = np.full((Q.shape[0], k), np.inf, dtype=np.float64)
        ids = np.full((Q.shape[0], k), -1, dtype=np.int64)
        for r in range(Q.shape[0]):
            out = self.search(Q[r], k, ef_search)
            m = out.ids.shape[0]
            ids[r, :m] = out.ids
            dists[r, :m] = np.sqrt(out.dists)
        return dists, ids

    # ------------------------------------------------------------------
    # persistence (vectors are stored separately, by design)
    # ------------------------------------------------------------------

    def save(self, path):
        self._check_fitted()
        with open(path, "wb") as f:
            f.write(_MAGIC)
            f.write(struct.pack("<IIIIIQQ", _VERSION, self.dim_, self.M,
                                self.ef_construction, self.max_level_,
                                self.count_, self.entry_point_))
            f.write(self.levels_.astype("<i4").tobytes())
            for l in range(self.max_level_ + 1):
                indptr, indices = self._layers[l]
                f.write(indptr.astype("<i8").tobytes())
                f.write(indices.astype("<i4").tobytes())

    @classmethod
    def load(cls, path, vectors):
        """Rebuild an index object from `save` output plus the original
        vector set (which the file intentionally does not duplicate)."""
        vectors = check_vectors(vectors, "vectors")
        with open(path, "rb") as f:
            buf = f.read()
        if buf[:8] != _MAGIC:
            raise DataFormatError(f"{path}: not an index file (bad magic)")
        off = 8

        def take(dtype, count):
            nonlocal off
            dt = np.dtype(dtype)
            nbytes = dt.itemsize * count
            if off + nbytes > len(buf):
                raise DataFormatError(
                    f"{path}: truncated at byte {len(buf)} "
                    f"(needed {off + nbytes})")
            arr = np.frombuffer(buf, dtype=dt, count=count, offset=off)
            off += nbytes
            return arr

        header = struct.unpack_from("<IIIIIQQ", buf, off)
        off += struct.calcsize("<IIIIIQQ")
        version, dim, m, efc, max_level, count, entry = header
        if version != _VERSION:
            raise DataFormatError(
                f"{path}: unsupported index version {version}")
        if count != vectors.shape[0] or dim != vectors.shape[1]:
            raise DataFormatError(
                f"{path}: index was built over {count} x {dim} vectors, "
                f"got {vectors.shape[0]} x {vectors.shape[1]}")
        levels = take("<i4", count).copy()
        layers = {}
        for l in range(max_level + 1):
            indptr = take("<i8", count + 1).copy()
            if indptr[0] != 0 or np.any(np.diff(indptr) < 0):
                raise DataFormatError(f"{path}: layer {l} indptr is corrupt")
            indices = take("<i4", int(indptr[-1])).copy()
            if indices.size and (indices.min() < 0 or
                                 indices.max() >= count):
                raise DataFormatError(
                    f"{path}: layer {l} has out-of-range neighbor ids")
            layers[l] = (indptr, indices)
        if off != len(buf):
            raise DataFormatError(
                f"{path}: {len(buf) - off} trailing bytes after layer data")
        if entry >= count:
            raise DataFormatError(f"{path}: entry point {entry} out of range")

        index = cls(M=int(m), ef_construction=int(efc))
        index._vectors = vectors
        index.count_ = int(count)
        index.dim_ = int(dim)
        index.levels_ = levels
        index.entry_point_ = int(entry)
        index.max_level_ = int(max_level)
        index._layers = layers
        return index
