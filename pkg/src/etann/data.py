"""Vector dataset I/O, exact ground truth, and synthetic workload generation.

File formats are the de-facto ANN-benchmark binary layouts:

* fvecs: repeated records of ``[int32 LE dim][dim x float32 LE]``
* ivecs: ``[int32 dim][dim x int32]``
* bvecs: ``[int32 dim][dim x uint8]`` (widened to float32 at load)

Distances are squared L2 everywhere inside the engine; metrics that need
true Euclidean distances take square roots at reporting time. All
tie-breaks are by lower vector id.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError
from .validation import check_positive_int, check_vectors

_HEADER_BYTES = 4
_ITEM_BYTES = {"fvecs": 4, "ivecs": 4, "bvecs": 1}


def _read_records(path: str, fmt: str) -> np.ndarray:
    """Decode a whole fvecs/ivecs/bvecs file into a (count, dim) payload of
    raw bytes, validating per-record dimension fields."""
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        # Degenerate but legal: empty dataset, dimension unknowable.
        return np.empty((0, 0), dtype=np.uint8)
    if raw.size < _HEADER_BYTES:
        raise DataFormatError(f"{path}: truncated record at byte offset 0")
    dim = int(raw[:_HEADER_BYTES].view("<i4")[0])
    if dim < 1:
        raise DataFormatError(f"{path}: invalid dimension field {dim} at record 0")
    rec = _HEADER_BYTES + dim * _ITEM_BYTES[fmt]
    if raw.size % rec != 0:
        offset = (raw.size // rec) * rec
        raise DataFormatError(f"{path}: truncated record at byte offset {offset}")
    mat = raw.reshape(-1, rec)
    dims = mat[:, :_HEADER_BYTES].copy().view("<i4").ravel()
    bad = np.flatnonzero(dims != dim)
    if bad.size:
        raise DataFormatError(
            f"{path}: dimension mismatch at record {bad[0]} "
            f"(declared {dims[bad[0]]}, expected {dim})"
        )
    return mat[:, _HEADER_BYTES:].copy()

def read_fvecs(path: str) -> np.ndarray:
    """Load an fvecs file as a (count, dim) float32 array."""
    body = _read_records(path, "fvecs")
    if body.size == 0:
        return np.empty(body.shape, dtype=np.float32)
    return body.view("<f4")

def read_ivecs(path: str) -> np.ndarray:
    """Load an ivecs file as a (count, dim) int32 array."""
    body = _read_records(path, "ivecs")
    if body.size == 0:
        return np.empty(body.shape, dtype=np.int32)
    return body.view("<i4")

def read_bvecs(path: str) -> np.ndarray:
    """Load a bvecs file, widening bytes to float32."""
    body = _read_records(path, "bvecs")
    return body.astype(np.float32)

def _write_records(path: str, data: np.ndarray, payload: np.ndarray) -> None:
    count, dim = data.shape
    out = np.empty((count, _HEADER_BYTES + payload.shape[1]), dtype=np.uint8)
    out[:, :_HEADER_BYTES] = (
        np.full(count, dim, dtype="<i4").view(np.uint8).reshape(count, _HEADER_BYTES)
    )
    out[:, _HEADER_BYTES:] = payload
    out.tofile(path)

def write_fvecs(path: str, X) -> None:
    X = np.ascontiguousarray(X, dtype="<f4")
    if X.ndim != 2 or (X.shape[0] > 0 and X.shape[1] < 1):
        raise ValueError(f"fvecs payload must be 2-D with dim >= 1, got {X.shape}")
    _write_records(path, X, X.view(np.uint8).reshape(X.shape[0], -1))

def write_ivecs(path: str, X) -> None:
    X = np.ascontiguousarray(X, dtype="<i4")
    if X.ndim != 2 or (X.shape[0] > 0 and X.shape[1] < 1):
        raise ValueError(f"ivecs payload must be 2-D with dim >= 1, got {X.shape}")
    _write_records(path, X, X.view(np.uint8).reshape(X.shape[0], -1))

def write_bvecs(path: str, X) -> None:
    X = np.asarray(X)
    if X.ndim != 2 or (X.shape[0] > 0 and X.shape[1] < 1):
        raise ValueError(f"bvecs payload must be 2-D with dim >= 1, got {X.shape}")
    if X.size and (np.any(X < 0) or np.any(X > 255) or np.any(X != np.floor(X))):
        raise ValueError("bvecs payload must hold integers in [0, 255]")
    X = np.ascontiguousarray(X, dtype=np.uint8)
    _write_records(path, X, X)

def load_vectors(path: str) -> np.ndarray:
    """Load a vector file, dispatching on its extension
    (.fvecs/.ivecs/.bvecs); ivecs and bvecs payloads come back as float32."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".fvecs":
        return read_fvecs(path)
    if ext == ".bvecs":
        return read_bvecs(path)
    if ext == ".ivecs":
        return read_ivecs(path).astype(np.float32)
    raise DataFormatError(f"{path}: unknown vector format {ext!r}")


@dataclass(frozen=True)
class GroundTruth:
    """Exact k-NN answers: per-query neighbor ids and squared-L2 distances,
    both sorted by (distance, id) ascending per row."""

    ids: np.ndarray    # (n_queries, k) int32
    dists: np.ndarray  # (n_queries, k) float64, squared L2, non-decreasing rows

    @property
    def k(self) -> int:
        return self.ids.shape[1]

    def save(self, ids_path: str, dists_path: str) -> None:
        write_ivecs(ids_path, self.ids)
        write_fvecs(dists_path, self.dists)

    @classmethod
    def load(cls, ids_path: str, dists_path: str) -> "GroundTruth":
        ids = read_ivecs(ids_path)
        dists = read_fvecs(dists_path).astype(np.float64)
        if ids.shape != dists.shape:
            raise DataFormatError(
                f"ground-truth shape mismatch: ids {ids.shape} vs dists {dists.shape}"
            )
        return cls(ids=ids, dists=dists)


def squared_distances(base: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """All-pairs squared L2 distances, float64, shape (n_queries, n_base).

    Computed via the expansion ||q||^2 - 2 q.b + ||b||^2 in float64 so that
    BLAS does the heavy lifting; tiny negative round-off is clipped to 0.
    """
    B = np.asarray(base, dtype=np.float64)
    Q = np.asarray(queries, dtype=np.float64)
    d = (Q * Q).sum(axis=1)[:, None] - 2.0 * (Q @ B.T) + (B * B).sum(axis=1)[None, :]
    np.maximum(d, 0.0, out=d)
    return d

def brute_force_knn(base, queries, k: int, chunk: int = 256) -> GroundTruth:
    """Exact k nearest neighbors under squared L2, ties broken by lower id."""
    base = check_vectors(base, "base")
    queries = check_vectors(queries, "queries")
    k = check_positive_int(k, "k")
    if base.shape[0] < k:
        raise ValueError(f"k={k} exceeds base count {base.shape[0]}")
    if queries.shape[0] and base.shape[1] != queries.shape[1]:
        raise ValueError(
            f"dim mismatch: base {base.shape[1]} vs queries {queries.shape[1]}"
        )
    n = queries.shape[0]
    ids = np.empty((n, k), dtype=np.int32)
    dists = np.empty((n, k), dtype=np.float64)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        d = squared_distances(base, queries[lo:hi])
        for r in range(d.shape[0]):
            row = d[r]
            # Tie-exact top-k: gather everything at or below the k-th value,
            # then order by (distance, id). argpartition alone is not
            # deterministic at a tied boundary.
            thresh = np.partition(row, k - 1)[k - 1]
            cand = np.flatnonzero(row <= thresh)
            order = cand[np.lexsort((cand, row[cand]))][:k]
            ids[lo + r] = order
            dists[lo + r] = row[order]
    return GroundTruth(ids=ids, dists=dists)


NOISE_RULES = ("variance_norm", "variance_sqnorm", "std_norm")

def add_gaussian_noise(queries, noise_pct: float, seed: int,
                       rule: str = "variance_norm") -> np.ndarray:
    """Per-query Gaussian perturbation scaled by the query's norm.

    The default rule reads the scaling literally: per-component noise
    *variance* sigma^2 = noise_pct * ||q||_2. The alternate readings
    (variance proportional to the squared norm, or std-dev proportional to
    the norm) are selectable because the prose rule is ambiguous.
    """
    queries = check_vectors(queries, "queries")
    if noise_pct < 0:
        raise ValueError(f"noise_pct must be >= 0, got {noise_pct}")
    if rule not in NOISE_RULES:
        raise ValueError(f"rule must be one of {NOISE_RULES}, got {rule!r}")
    if noise_pct == 0:
        return queries.copy()
    norms = np.linalg.norm(queries.astype(np.float64), axis=1)
    if rule == "variance_norm":
        sigma = np.sqrt(noise_pct * norms)
    elif rule == "variance_sqnorm":
        sigma = np.sqrt(noise_pct) * norms
    else:  # std_norm
        sigma = noise_pct * norms
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(queries.shape)
    return (queries.astype(np.float64) + sigma[:, None] * z).astype(np.float32)

def split_learn_queries(learn, n_train: int, n_valid: int, seed: int):
    """Disjoint random (train, valid) subsets of a learn set, seeded."""
    learn = check_vectors(learn, "learn")
    n_train = check_positive_int(n_train, "n_train", minimum=0)
    n_valid = check_positive_int(n_valid, "n_valid", minimum=0)
    if n_train + n_valid > learn.shape[0]:
        raise ValueError(
            f"n_train + n_valid = {n_train + n_valid} exceeds "
            f"learn count {learn.shape[0]}"
        )
    perm = np.random.default_rng(seed).permutation(learn.shape[0])
    return learn[perm[:n_train]].copy(), learn[perm[n_train:n_train + n_valid]].copy()

def make_gaussian_mixture(count: int, dim: int, n_components: int,
                          seed: int, spread: float = 4.0,
                          intrinsic_dim: int | None = None) -> np.ndarray:
    """Synthetic clustered dataset: a seeded Gaussian mixture with varied
    component scales, a stand-in for SIFT-style workloads.

    With ``intrinsic_dim=r`` each component lies on its own random
    r-dimensional subspace (plus its mean), mimicking the low intrinsic
    dimensionality of real descriptor collections; the default keeps the
    components isotropic.
    """
    count = check_positive_int(count, "count", minimum=0)
    dim = check_positive_int(dim, "dim")
    n_components = check_positive_int(n_components, "n_components")
    if intrinsic_dim is not None:
        intrinsic_dim = check_positive_int(intrinsic_dim, "intrinsic_dim")
        if intrinsic_dim > dim:
            raise ValueError(
                f"intrinsic_dim={intrinsic_dim} exceeds dim={dim}")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((n_components, dim)) * spread
    scales = rng.lognormal(mean=0.0, sigma=0.4, size=n_components)
    comp = rng.integers(0, n_components, size=count)
    if intrinsic_dim is None:
        noise = rng.standard_normal((count, dim))
    else:
        bases = rng.standard_normal((n_components, intrinsic_dim, dim))
        bases /= np.sqrt(intrinsic_dim)
        z = rng.standard_normal((count, intrinsic_dim))
        noise = np.einsum("nr,nrd->nd", z, bases[comp])
    X = means[comp] + noise * scales[comp, None]
    return X.astype(np.float32)
