"""Least-squares gradient-boosted regression trees, from scratch.

Trainer: histogram-based variance-reduction splits (default 256 bins) with
an exact-midpoint mode retained for oracle tests; level-wise growth with
numpy bincount histograms, so training 10^6-row logs takes seconds, not
hours. Leaf values are mean residuals with the learning rate folded in, so
prediction is base_score plus a plain sum of leaf values.

Determinism: all split ties break toward the lower feature index and lower
bin; histogram accumulation uses bincount (fixed summation order); the row
subsampler is seeded. Same data + config + seed -> bit-identical model.

Serialized form is a line-oriented text file (see the model-format notes
in the README): a header carrying version, n_estimators, learning_rate,
base_score, feature_count, and the clip bounds, then each tree as a
preorder node list with
splits as ``s <feature> <threshold>`` and leaves as ``l <value>``, floats
printed with 17 significant digits so they round-trip exactly. Split gains
are not persisted, so gain-based feature importances exist on fitted
models only.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator

from .errors import DataFormatError

_GAIN_EPS = 1e-12
_FORMAT_MAGIC = "gbrt-model"
_FORMAT_VERSION = 1


@njit(cache=True)
def _walk_forest(roots, feature, threshold, left, right, value, x):
    """Sum of leaf values one row reaches across every packed tree.
    Comparisons mirror the vectorized path: x > thr goes right, so NaN
    features route left."""
    out = 0.0
    for i in range(roots.shape[0]):
        node = roots[i]
        while feature[node] >= 0:
            if x[feature[node]] > threshold[node]:
                node = right[node]
            else:
                node = left[node]
        out += value[node]
    return out


class _Tree:
    """Packed arrays for one regression tree (local node ids, root = 0).

    Leaves carry feature = -1 and left = right = own id (self-loop), which
    lets fixed-iteration vectorized descent land on the leaf without
    masking.
    """

    __slots__ = ("feature", "threshold", "left", "right", "value", "depth")

    def __init__(self, feature, threshold, left, right, value, depth):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.value = np.asarray(value, dtype=np.float64)
        self.depth = depth

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Vectorized descent on raw feature values; NaN routes left."""
        n = X.shape[0]
        cur = np.zeros(n, dtype=np.int32)
        navf = np.where(self.feature >= 0, self.feature, 0)
        for _ in range(self.depth):
            x = X[np.arange(n), navf[cur]]
            go_right = x > self.threshold[cur]  # NaN compares False -> left
            cur = np.where(go_right, self.right[cur], self.left[cur])
        return self.value[cur]


class GradientBoostedRegressor(BaseEstimator):
    """Squared-error gradient boosting over binary regression trees.

    Parameters mirror common GBDT library defaults: 100 estimators,
    learning rate 0.1, depth 6, min 20 samples per leaf, 256 histogram
    bins, no row subsampling. ``split_mode="exact"`` switches candidate
    thresholds to all midpoints between consecutive distinct values (for
    small-data oracle equivalence; ignores max_bins). ``clip_range`` caps
    predictions, used as (0, 1) at the recall-prediction boundary.
    """

    def __init__(self, n_estimators=100, learning_rate=0.1, max_depth=6,
                 min_samples_leaf=20, max_bins=256, subsample=1.0,
                 split_mode="histogram", clip_range=None, random_state=0):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_bins = max_bins
        self.subsample = subsample
        self.split_mode = split_mode
        self.clip_range = clip_range
        self.random_state = random_state

    # ------------------------------------------------------------------ fit

    def _validate_train(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64).ravel()
        if X.ndim != 2:
            raise ValueError(f"X must be 2-D, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if X.shape[0] == 0:
            raise ValueError("training set is empty")
        finite = np.isfinite(X).all(axis=1)
        if not finite.all():
            raise ValueError(
                f"non-finite feature value at row {np.flatnonzero(~finite)[0]}"
            )
        if not np.isfinite(y).all():
            raise ValueError(
                f"non-finite label at row {np.flatnonzero(~np.isfinite(y))[0]}"
            )
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.n_estimators < 0:
            raise ValueError("n_estimators must be >= 0")
        if self.max_bins < 2:
            raise ValueError("max_bins must be >= 2")
        if self.split_mode not in ("histogram", "exact"):
            raise ValueError(f"unknown split_mode {self.split_mode!r}")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must be in (0, 1]")
        return X, y

    def _bin_edges(self, X: np.ndarray, rng: np.random.Generator) -> list[np.ndarray]:
        """Per-feature ascending threshold candidates (bin upper edges)."""
        edges = []
        for f in range(X.shape[1]):
            col = X[:, f]
            if self.split_mode == "exact":
                u = np.unique(col)
                edges.append((u[:-1] + u[1:]) / 2.0)
            else:
                if col.shape[0] > 200_000:
                    col = col[rng.choice(col.shape[0], 200_000, replace=False)]
                qs = np.linspace(0.0, 1.0, self.max_bins + 1)[1:-1]
                edges.append(np.unique(np.quantile(col, qs)))
        return edges

    def fit(self, X, y):
        X, y = self._validate_train(X, y)
        n, n_feat = X.shape
        rng = np.random.default_rng(self.random_state)

        self.n_features_in_ = n_feat
        self.base_score_ = float(y.mean())
        self.trees_: list[_Tree] = []
        self._gains = np.zeros(n_feat, dtype=np.float64)
        self.train_scores_ = []

        edges = self._bin_edges(X, rng)
        nbins = max(int(e.shape[0]) + 1 for e in edges)
        codes = np.empty((n, n_feat), dtype=np.int32)
        for f in range(n_feat):
            codes[:, f] = np.searchsorted(edges[f], X[:, f], side="left")

        pred = np.full(n, self.base_score_, dtype=np.float64)
        for _ in range(self.n_estimators):
            resid = y - pred
            if self.subsample < 1.0:
                m = max(1, int(round(self.subsample * n)))
                rows = np.sort(rng.choice(n, m, replace=False))
            else:
                rows = np.arange(n)
            tree, leaf_of_row = self._grow_tree(X, codes, resid, rows, edges, nbins)
            self.trees_.append(tree)
            if rows.shape[0] == n:
                pred += tree.value[leaf_of_row]
            else:
                pred += tree.predict(X)
            self.train_scores_.append(float(np.mean((y - pred) ** 2)))
        self._finalize()
        return self

    def _grow_tree(self, X, codes, resid, rows, edges, nbins):
        """Level-wise histogram growth; returns the tree and each subsample
        row's final leaf id."""
        lr = self.learning_rate
        msl = self.min_samples_leaf
        feature, threshold, left, right, value = [], [], [], [], []
        node_sum, node_cnt, node_depth = [], [], []

        def new_node(s: float, c: float, depth: int) -> int:
            feature.append(-1)
            threshold.append(math.inf)
            nid = len(feature) - 1
            left.append(nid)
            right.append(nid)
            value.append(0.0)
            node_sum.append(s)
            node_cnt.append(c)
            node_depth.append(depth)
            return nid

        full = rows.shape[0] == codes.shape[0]
        csub = codes if full else codes[rows]
        rsub = resid if full else resid[rows]
        root = new_node(float(rsub.sum()), float(rows.shape[0]), 0)
        node_of_row = np.zeros(rows.shape[0], dtype=np.int32)
        alive = np.arange(rows.shape[0])
        frontier = [root]
        max_depth_seen = 0

        for depth in range(self.max_depth):
            if not frontier or alive.shape[0] == 0:
                break
            S = len(frontier)
            slot_table = np.full(len(feature), -1, dtype=np.int32)
            for s, nid in enumerate(frontier):
                slot_table[nid] = s
            slot = slot_table[node_of_row[alive]]
            slot_key = slot.astype(np.int64) * nbins
            ca = csub[alive]
            r_alive = rsub[alive]

            best_gain = np.full(S, -np.inf)
            best_feat = np.zeros(S, dtype=np.int32)
            best_bin = np.zeros(S, dtype=np.int64)
            best_slsum = np.zeros(S, dtype=np.float64)
            best_nl = np.zeros(S, dtype=np.float64)
            tot_sum = tot_cnt = None
            srange = np.arange(S)
            for f in range(codes.shape[1]):
                key = slot_key + ca[:, f]
                hw = np.bincount(key, weights=r_alive, minlength=S * nbins)
                hc = np.bincount(key, minlength=S * nbins)
                cw = hw.reshape(S, nbins).cumsum(axis=1)
                cc = hc.reshape(S, nbins).cumsum(axis=1)
                if tot_sum is None:
                    tot_sum = cw[:, -1].copy()
                    tot_cnt = cc[:, -1].copy()
                SL, NL = cw[:, :-1], cc[:, :-1]
                SR = tot_sum[:, None] - SL
                NR = tot_cnt[:, None] - NL
                valid = (NL >= msl) & (NR >= msl)
                with np.errstate(divide="ignore", invalid="ignore"):
                    gain = (SL * SL) / NL + (SR * SR) / NR \
                        - (tot_sum * tot_sum / tot_cnt)[:, None]
                gain = np.where(valid, gain, -np.inf)
                gf = gain.max(axis=1, initial=-np.inf)
                bf = gain.argmax(axis=1) if gain.shape[1] else np.zeros(S, np.int64)
                better = gf > best_gain  # strict: ties keep lower feature
                if better.any():
                    best_gain[better] = gf[better]
                    best_feat[better] = f
                    best_bin[better] = bf[better]
                    best_slsum[better] = SL[srange, bf][better]
                    best_nl[better] = NL[srange, bf][better]

            is_split = best_gain > _GAIN_EPS
            left_child = np.full(S, -1, dtype=np.int32)
            right_child = np.full(S, -1, dtype=np.int32)
            new_frontier = []
            for s, nid in enumerate(frontier):
                if not is_split[s]:
                    value[nid] = lr * node_sum[nid] / node_cnt[nid]
                    continue
                f, b = int(best_feat[s]), int(best_bin[s])
                feature[nid] = f
                if self.split_mode == "exact":
                    sel = alive[slot == s]
                    xk = X[rows[sel], f]
                    ck = csub[sel, f]
                    threshold[nid] = (xk[ck <= b].max() + xk[ck > b].min()) / 2.0
                else:
                    threshold[nid] = float(edges[f][b])
                self._gains[f] += best_gain[s]
                max_depth_seen = depth + 1
                lc = new_node(best_slsum[s], best_nl[s], depth + 1)
                rc = new_node(node_sum[nid] - best_slsum[s],
                              node_cnt[nid] - best_nl[s], depth + 1)
                left[nid] = left_child[s] = lc
                right[nid] = right_child[s] = rc
                new_frontier.extend((lc, rc))

            if not new_frontier:
                break
            sf = best_feat[slot]
            sb = best_bin[slot]
            split_here = is_split[slot]
            c_at = csub[alive, sf]
            dest = np.where(c_at <= sb, left_child[slot], right_child[slot])
            node_of_row[alive[split_here]] = dest[split_here]
            alive = alive[split_here]
            frontier = new_frontier

        # children created at the final level (or orphaned by an early
        # break) still need their leaf values
        for nid in frontier:
            if feature[nid] == -1 and value[nid] == 0.0 and node_cnt[nid] > 0:
                value[nid] = lr * node_sum[nid] / node_cnt[nid]
        tree = _Tree(feature, threshold, left, right, value,
                     depth=max(max_depth_seen, 1))
        return tree, node_of_row

    def _finalize(self):
        """Pack the forest into flat arrays for the single-row kernel."""
        roots, feat, thr = [], [], []
        left, right, value = [], [], []
        off = 0
        for t in self.trees_:
            roots.append(off)
            feat.extend(int(v) for v in t.feature)
            thr.extend(float(v) for v in t.threshold)
            left.extend(int(v) + off for v in t.left)
            right.extend(int(v) + off for v in t.right)
            value.extend(float(v) for v in t.value)
            off += t.n_nodes
        self._flat_roots = np.asarray(roots, dtype=np.int64)
        self._flat_feature = np.asarray(feat, dtype=np.int64)
        self._flat_threshold = np.asarray(thr, dtype=np.float64)
        self._flat_left = np.asarray(left, dtype=np.int64)
        self._flat_right = np.asarray(right, dtype=np.int64)
        self._flat_value = np.asarray(value, dtype=np.float64)

    # -------------------------------------------------------------- predict

    def _check_fitted(self):
        if not hasattr(self, "trees_"):
            raise RuntimeError("model is not fitted")

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X must be (n, {self.n_features_in_}), got {X.shape}"
            )
        out = np.full(X.shape[0], self.base_score_, dtype=np.float64)
        for t in self.trees_:
            out += t.predict(X)
        if self.clip_range is not None:
            np.clip(out, self.clip_range[0], self.clip_range[1], out=out)
        return out

    def predict_row(self, row) -> float:
        """Single-row prediction on the hot path (flat-forest kernel)."""
        self._check_fitted()
        x = np.asarray(row, dtype=np.float64)
        if x.shape != (self.n_features_in_,):
            raise ValueError(
                f"row has {len(row)} features, model expects {self.n_features_in_}"
            )
        out = self.base_score_ + _walk_forest(
            self._flat_roots, self._flat_feature, self._flat_threshold,
            self._flat_left, self._flat_right, self._flat_value, x)
        if self.clip_range is not None:
            lo, hi = self.clip_range
            out = lo if out < lo else hi if out > hi else out
        return out

    @property
    def feature_importances_(self) -> np.ndarray:
        """Per-feature split-gain shares summing to 1 (zero vector for a
        degenerate all-leaf model)."""
        self._check_fitted()
        if getattr(self, "_gains", None) is None:
            raise RuntimeError(
                "feature importances are not persisted in model files; "
                "available on freshly fitted models only"
            )
        total = self._gains.sum()
        if total <= 0.0:
            return np.zeros_like(self._gains)
        return self._gains / total

    # ---------------------------------------------------------- persistence

    def save(self, path: str) -> None:
        self._check_fitted()
        lines = [
            f"{_FORMAT_MAGIC} v{_FORMAT_VERSION}",
            f"n_estimators={len(self.trees_)} "
            f"learning_rate={format(self.learning_rate, '.17g')} "
            f"base_score={format(self.base_score_, '.17g')} "
            f"feature_count={self.n_features_in_} "
            + ("clip=-" if self.clip_range is None else
               f"clip={format(float(self.clip_range[0]), '.17g')}"
               f":{format(float(self.clip_range[1]), '.17g')}"),
        ]
        for ti, t in enumerate(self.trees_):
            lines.append(f"tree {ti} nodes={t.n_nodes}")
            stack = [0]
            seen = 0
            while stack:
                nid = stack.pop()
                seen += 1
                if t.feature[nid] < 0:
                    lines.append(f"l {format(float(t.value[nid]), '.17g')}")
                else:
                    lines.append(
                        f"s {int(t.feature[nid])} "
                        f"{format(float(t.threshold[nid]), '.17g')}"
                    )
                    stack.append(int(t.right[nid]))
                    stack.append(int(t.left[nid]))
            assert seen == t.n_nodes
        with open(path, "w", encoding="ascii") as f:
            f.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str) -> "GradientBoostedRegressor":
        with open(path, "r", encoding="ascii") as f:
            lines = [ln.rstrip("\n") for ln in f if ln.strip()]
        if not lines or not lines[0].startswith(_FORMAT_MAGIC):
            raise DataFormatError(f"{path}: not a {_FORMAT_MAGIC} file")
        version = lines[0].split("v")[-1]
        if version != str(_FORMAT_VERSION):
            raise DataFormatError(f"{path}: unsupported version {version}")
        try:
            header = dict(kv.split("=", 1) for kv in lines[1].split())
        except ValueError as e:
            raise DataFormatError(f"{path}: malformed header ({e})") from e
        clip_raw = header.get("clip", "-")
        if clip_raw == "-":
            clip = None
        else:
            try:
                lo, hi = clip_raw.split(":")
                clip = (float(lo), float(hi))
            except ValueError as e:
                raise DataFormatError(
                    f"{path}: malformed clip bounds {clip_raw!r}") from e
        model = cls(
            n_estimators=int(header["n_estimators"]),
            learning_rate=float(header["learning_rate"]),
            clip_range=clip,
        )
        model.base_score_ = float(header["base_score"])
        model.n_features_in_ = int(header["feature_count"])
        model.trees_ = []
        model._gains = None
        i = 2
        for _ in range(int(header["n_estimators"])):
            if i >= len(lines) or not lines[i].startswith("tree "):
                raise DataFormatError(f"{path}: missing tree header at line {i + 1}")
            n_nodes = int(lines[i].split("nodes=")[1])
            i += 1
            feature, threshold, left, right, value = [], [], [], [], []

            def parse_node():
                nonlocal i
                if i >= len(lines):
                    raise DataFormatError(f"{path}: truncated tree")
                parts = lines[i].split()
                i += 1
                nid = len(feature)
                if parts[0] == "l" and len(parts) == 2:
                    feature.append(-1)
                    threshold.append(math.inf)
                    left.append(nid)
                    right.append(nid)
                    value.append(float(parts[1]))
                elif parts[0] == "s" and len(parts) == 3:
                    feature.append(int(parts[1]))
                    threshold.append(float(parts[2]))
                    left.append(-1)
                    right.append(-1)
                    value.append(0.0)
                    left[nid] = parse_node()
                    right[nid] = parse_node()
                else:
                    raise DataFormatError(
                        f"{path}: malformed node line {i}: {lines[i - 1]!r}"
                    )
                return nid

            parse_node()
            if len(feature) != n_nodes:
                raise DataFormatError(
                    f"{path}: tree declares {n_nodes} nodes, found {len(feature)}"
                )
            feats = [f for f in feature if f >= 0]
            if feats and not all(0 <= f < model.n_features_in_ for f in feats):
                raise DataFormatError(f"{path}: feature index out of range")

            def depth_of(nid, d=0):
                if feature[nid] < 0:
                    return d
                return max(depth_of(left[nid], d + 1), depth_of(right[nid], d + 1))

            model.trees_.append(
                _Tree(feature, threshold, left, right, value,
                      depth=max(depth_of(0), 1))
            )
        model._finalize()
        return model
