"""Inverted-file index: k-means partitioning plus bucket probing.

The clustering is written out longhand (seeding, Lloyd updates, empty-
cluster repair) because bucket layout must be bit-reproducible across
runs and platforms; see fit() for the exact procedure.

Probing order, counters and hooks mirror hnsw.py so the same observers
and termination policies drive both index families:

* centroid distances are evaluated up front; they count toward ``ndis``
  when ``count_centroid_dists`` is set (the default), and the nearest
  centroid distance becomes ``first_nn`` either way;
* ``nstep`` holds the 1-based ordinal of the bucket being scanned;
* the per-distance ``hook`` fires after each member evaluation, the
  ``boundary_hook`` after each finished bucket.
"""

from __future__ import annotations

import struct
from time import perf_counter

import numpy as np
from sklearn.base import BaseEstimator

from .errors import DataFormatError
from .state import SearchState
from .validation import check_positive_int, check_query, check_vectors

_MAGIC = b"ETIVF001"
_VERSION = 1


def _assign(Xd, C, chunk=8192):
    """Nearest-centroid labels plus the distance to that centroid, in
    float64, ties going to the lower centroid id."""
    n = Xd.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dmin = np.empty(n, dtype=np.float64)
    c_sq = np.einsum("ij,ij->i", C, C)
    for s in range(0, n, chunk):
        blk = Xd[s:s + chunk]
        D = blk @ C.T
        D *= -2.0
        D += np.einsum("ij,ij->i", blk, blk)[:, None]
        D += c_sq
        np.maximum(D, 0.0, out=D)
        l = D.argmin(axis=1)
        labels[s:s + chunk] = l
        dmin[s:s + chunk] = D[np.arange(blk.shape[0]), l]
    return labels, dmin


class IvfIndex(BaseEstimator):
    """Coarse-quantized flat index over squared L2.

    Parameters
    ----------
    n_clusters : int, default=256
        Number of inverted lists.
    max_iter : int, default=25
        Lloyd iteration cap; iteration also stops when the assignment
        reaches a fixed point.
    count_centroid_dists : bool, default=True
        Whether the coarse-quantization distances are charged to ndis.
    random_state : int, default=0
        Seed for k-means++ seeding.
    """

    def __init__(self, n_clusters=256, max_iter=25,
                 count_centroid_dists=True, random_state=0):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.count_centroid_dists = count_centroid_dists
        self.random_state = random_state

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------

    def _seed_centroids(self, Xd, rng):
        """k-means++ seeding with D^2 sampling. If every remaining point
        coincides with a chosen centroid (total weight zero) the guard
        picks the lowest-id point not yet chosen."""
        n = Xd.shape[0]
        ncl = self.n_clusters
        chosen = np.empty(ncl, dtype=np.int64)
        chosen[0] = int(rng.integers(n))
        diff = Xd - Xd[chosen[0]]
        min_d2 = np.einsum("ij,ij->i", diff, diff)
        for t in range(1, ncl):
            total = float(min_d2.sum())
            if total <= 0.0:
                mask = np.ones(n, dtype=bool)
                mask[chosen[:t]] = False
                nxt = int(np.flatnonzero(mask)[0])
            else:
                r = rng.random() * total
                nxt = int(np.searchsorted(np.cumsum(min_d2), r,
                                          side="right"))
                nxt = min(nxt, n - 1)
            chosen[t] = nxt
            diff = Xd - Xd[nxt]
            np.minimum(min_d2, np.einsum("ij,ij->i", diff, diff),
                       out=min_d2)
        return Xd[chosen].copy()

    def fit(self, X, y=None):
        X = check_vectors(X, "X")
        check_positive_int(self.n_clusters, "n_clusters", 1)
        check_positive_int(self.max_iter, "max_iter", 1)
        if X.shape[0] < self.n_clusters:
            raise ValueError(
                f"cannot form {self.n_clusters} clusters from "
                f"{X.shape[0]} vectors")

        t0 = perf_counter()
        rng = np.random.default_rng(self.random_state)
        Xd = X.astype(np.float64)
        C = self._seed_centroids(Xd, rng)
        d = X.shape[1]
        ncl = self.n_clusters
        labels_prev = None
        self.n_iter_ = 0
        for _ in range(self.max_iter):
            labels, dmin = _assign(Xd, C)
            if labels_prev is not None and np.array_equal(labels, labels_prev):
                break
            self.n_iter_ += 1
            labels_prev = labels
            counts = np.bincount(labels, minlength=ncl).astype(np.float64)
            sums = np.empty((ncl, d), dtype=np.float64)
            for j in range(d):
                sums[:, j] = np.bincount(labels, weights=Xd[:, j],
                                         minlength=ncl)
            # repair empty clusters: steal the farthest member of the
            # currently largest cluster (ties toward the lower id)
            for e in np.flatnonzero(counts == 0):
                big = int(counts.argmax())
                members = np.flatnonzero(labels == big)
                dm = dmin[members]
                far = int(members[np.lexsort((members, -dm))[0]])
                labels[far] = e
                sums[big] -= Xd[far]
                counts[big] -= 1
                sums[e] = Xd[far]
                counts[e] = 1
                labels_prev = None
            C = sums / counts[:, None]
        labels, _ = _assign(Xd, C)

        order = np.argsort(labels, kind="stable")
        counts = np.bincount(labels, minlength=ncl)
        indptr = np.zeros(ncl + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        self._indptr = indptr
        self._indices = order.astype(np.int32)
        self.centroids_ = C.astype(np.float32)
        self._centroids64 = C
        self._vectors = X
        self.count_ = int(X.shape[0])
        self.dim_ = int(X.shape[1])
        self.build_seconds_ = perf_counter() - t0
        return self

    def _check_fitted(self):
        if not hasattr(self, "_indptr"):
            raise RuntimeError("index is not built; call fit() or load()")

    def bucket(self, cluster_id):
        """Member ids of one inverted list, ascending."""
        self._check_fitted()
        return self._indices[self._indptr[cluster_id]:
                             self._indptr[cluster_id + 1]]

    # ------------------------------------------------------------------
    # queries
    # ------------------------------------------------------------------

    def search(self, query, k, nprobe, hook=None, boundary_hook=None):
        """Scan the nprobe nearest buckets; hooks may stop the scan early
        exactly as in HnswIndex.search."""
        self._check_fitted()
        q = check_query(query, self.dim_, "query")
        check_positive_int(k, "k", 1)
        check_positive_int(nprobe, "nprobe", 1)
        if k > self.count_:
            raise ValueError(
                f"k={k} exceeds the number of indexed vectors ({self.count_})")

        t0 = perf_counter()
        state = SearchState(k, k)
        vecs = self._vectors
        cents = self.centroids_
        diff = cents - q
        cdist = np.einsum("ij,ij->i", diff, diff)
        order = np.lexsort((np.arange(cents.shape[0]), cdist))
        if self.count_centroid_dists:
            state.ndis += cents.shape[0]
            state.idis += cents.shape[0]
        state.first_nn = float(cdist[order[0]])

        indptr, indices = self._indptr, self._indices
        for j in range(min(nprobe, cents.shape[0])):
            cid = order[j]
            state.nstep = j + 1
            members = indices[indptr[cid]:indptr[cid + 1]]
            if members.size:
                diff = vecs[members] - q
                dd = np.einsum("ij,ij->i", diff, diff)
                for dist, node in zip(dd.tolist(), members.tolist()):
                    state.count_distance(dist, node)
                    if state.admits(dist, node):
                        state.insert(dist, node)
                    if hook is not None and hook(state):
                        return state.outcome("early", perf_counter() - t0)
            if boundary_hook is not None and boundary_hook(state):
                return state.outcome("early", perf_counter() - t0)
        return state.outcome("natural", perf_counter() - t0)

    def kneighbors(self, X, k=10, nprobe=8):
        """Plain batch search; true (not squared) L2 distances, float64,
        (n_queries, k), unfilled slots inf / -1."""
        self._check_fitted()
        Q = check_vectors(X, "X")
        if Q.shape[1] != self.dim_:
            raise ValueError(
                f"X has dim {Q.shape[1]}, index has dim {self.dim_}")
        dists = np.full((Q.shape[0], k), np.inf, dtype=np.float64)
        ids = np.full((Q.shape[0], k), -1, dtype=np.int64)
        for r in range(Q.shape[0]):
            out = self.search(Q[r], k, nprobe)
            m = out.ids.shape[0]
            ids[r, :m] = out.ids
            dists[r, :m] = np.sqrt(out.dists)
        return dists, ids

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------

    def save(self, path):
        self._check_fitted()
        with open(path, "wb") as f:
            f.write(_MAGIC)
            f.write(struct.pack("<IIIQ", _VERSION, self.dim_,
                                self.n_clusters, self.count_))
            f.write(self.centroids_.astype("<f4").tobytes())
            f.write(self._indptr.astype("<i8").tobytes())
            f.write(self._indices.astype("<i4").tobytes())

    @classmethod
    def load(cls, path, vectors):
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

        version, dim, ncl, count = struct.unpack_from("<IIIQ", buf, off)
        off += struct.calcsize("<IIIQ")
        if version != _VERSION:
            raise DataFormatError(
                f"{path}: unsupported index version {version}")
        if count != vectors.shape[0] or dim != vectors.shape[1]:
            raise DataFormatError(
                f"{path}: index was built over {count} x {dim} vectors, "
                f"got {vectors.shape[0]} x {vectors.shape[1]}")
        cents = take("<f4", ncl * dim).reshape(ncl, dim).copy()
        indptr = take("<i8", ncl + 1).copy()
        if indptr[0] != 0 or np.any(np.diff(indptr) < 0) or \
                indptr[-1] != count:
            raise DataFormatError(f"{path}: bucket indptr is corrupt")
        indices = take("<i4", int(count)).copy()
        if off != len(buf):
            raise DataFormatError(
                f"{path}: {len(buf) - off} trailing bytes after bucket data")
        if indices.size and (indices.min() < 0 or indices.max() >= count):
            raise DataFormatError(f"{path}: out-of-range member ids")

        index = cls(n_clusters=int(ncl))
        index._vectors = vectors
        index.count_ = int(count)
        index.dim_ = int(dim)
        index.centroids_ = cents
        index._centroids64 = cents.astype(np.float64)
        index._indptr = indptr
        index._indices = indices
        return index
