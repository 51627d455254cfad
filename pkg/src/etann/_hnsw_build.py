"""Numba kernels for sequential HNSW construction.

Only the build lives here: it is the one O(n * efC * dim) hot path that
pure Python cannot cover at 100K-vector scale. Every query-time traversal
is implemented once, in Python, in hnsw.py.

All heaps are binary heaps on parallel (float32 dist, int32 id) arrays
with lexicographic (dist, id) ordering so ties always resolve toward the
lower id. The visited set is an epoch array: bumping the epoch invalidates
the whole set in O(1) between layer searches.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True, inline="always")
def _sqdist(vectors, i, q):
    row = vectors[i]
    s = np.float32(0.0)
    for j in range(q.shape[0]):
        d = row[j] - q[j]
        s += d * d
    return s


@njit(cache=True, fastmath=True, inline="always")
def _sqdist_rows(vectors, i, j):
    a = vectors[i]
    b = vectors[j]
    s = np.float32(0.0)
    for t in range(a.shape[0]):
        d = a[t] - b[t]
        s += d * d
    return s


@njit(cache=True, inline="always")
def _lt(d1, i1, d2, i2):
    return d1 < d2 or (d1 == d2 and i1 < i2)


@njit(cache=True)
def _push_min(hd, hi, size, d, i):
    pos = size
    hd[pos] = d
    hi[pos] = i
    while pos > 0:
        par = (pos - 1) >> 1
        if _lt(hd[pos], hi[pos], hd[par], hi[par]):
            hd[pos], hd[par] = hd[par], hd[pos]
            hi[pos], hi[par] = hi[par], hi[pos]
            pos = par
        else:
            break
    return size + 1


@njit(cache=True)
def _pop_min(hd, hi, size):
    size -= 1
    hd[0] = hd[size]
    hi[0] = hi[size]
    pos = 0
    while True:
        l = 2 * pos + 1
        r = l + 1
        best = pos
        if l < size and _lt(hd[l], hi[l], hd[best], hi[best]):
            best = l
        if r < size and _lt(hd[r], hi[r], hd[best], hi[best]):
            best = r
        if best == pos:
            break
        hd[pos], hd[best] = hd[best], hd[pos]
        hi[pos], hi[best] = hi[best], hi[pos]
        pos = best
    return size


@njit(cache=True)
def _push_max(hd, hi, size, d, i):
    pos = size
    hd[pos] = d
    hi[pos] = i
    while pos > 0:
        par = (pos - 1) >> 1
        if _lt(hd[par], hi[par], hd[pos], hi[pos]):
            hd[pos], hd[par] = hd[par], hd[pos]
            hi[pos], hi[par] = hi[par], hi[pos]
            pos = par
        else:
            break
    return size + 1


@njit(cache=True)
def _pop_max(hd, hi, size):
    size -= 1
    hd[0] = hd[size]
    hi[0] = hi[size]
    pos = 0
    while True:
        l = 2 * pos + 1
        r = l + 1
        best = pos
        if l < size and _lt(hd[best], hi[best], hd[l], hi[l]):
            best = l
        if r < size and _lt(hd[best], hi[best], hd[r], hi[r]):
            best = r
        if best == pos:
            break
        hd[pos], hd[best] = hd[best], hd[pos]
        hi[pos], hi[best] = hi[best], hi[pos]
        pos = best
    return size


@njit(cache=True)
def _greedy(vectors, nbrs, degs, q, cur, d_cur):
    """Width-1 greedy descent within one layer."""
    improved = True
    while improved:
        improved = False
        best = cur
        d_best = d_cur
        for j in range(degs[cur]):
            nb = nbrs[cur, j]
            d = _sqdist(vectors, nb, q)
            if _lt(d, nb, d_best, best):
                best = nb
                d_best = d
        if d_best < d_cur:
            cur = best
            d_cur = d_best
            improved = True
    return cur, d_cur


@njit(cache=True)
def _search_layer(vectors, nbrs, degs, q, eps_i, n_eps, ef,
                  visited, epoch, cand_d, cand_i, res_d, res_i):
    """Best-first expansion at one layer; result left in (res_d, res_i)
    as a max-heap of size <= ef. Returns the result size."""
    cs = 0
    rs = 0
    for j in range(n_eps):
        e = eps_i[j]
        if visited[e] == epoch:
            continue
        visited[e] = epoch
        d = _sqdist(vectors, e, q)
        cs = _push_min(cand_d, cand_i, cs, d, e)
        if rs < ef:
            rs = _push_max(res_d, res_i, rs, d, e)
        elif _lt(d, e, res_d[0], res_i[0]):
            rs = _pop_max(res_d, res_i, rs)
            rs = _push_max(res_d, res_i, rs, d, e)
    while cs > 0:
        d_c = cand_d[0]
        c = cand_i[0]
        cs = _pop_min(cand_d, cand_i, cs)
        if rs >= ef and d_c > res_d[0]:
            break
        for j in range(degs[c]):
            nb = nbrs[c, j]
            if visited[nb] == epoch:
                continue
            visited[nb] = epoch
            d = _sqdist(vectors, nb, q)
            if rs < ef:
                cs = _push_min(cand_d, cand_i, cs, d, nb)
                rs = _push_max(res_d, res_i, rs, d, nb)
            elif _lt(d, nb, res_d[0], res_i[0]):
                cs = _push_min(cand_d, cand_i, cs, d, nb)
                rs = _pop_max(res_d, res_i, rs)
                rs = _push_max(res_d, res_i, rs, d, nb)
    return rs


@njit(cache=True)
def _sort_pairs(pd, pi, n):
    """In-place insertion sort ascending by (dist, id)."""
    for a in range(1, n):
        d = pd[a]
        x = pi[a]
        b = a - 1
        while b >= 0 and _lt(d, x, pd[b], pi[b]):
            pd[b + 1] = pd[b]
            pi[b + 1] = pi[b]
            b -= 1
        pd[b + 1] = d
        pi[b + 1] = x


@njit(cache=True)
def _select_heuristic(vectors, q, cand_d, cand_i, n, M, out_i, out_d):
    """Standard neighbor-selection heuristic: scan candidates by ascending
    distance to q, pruning any candidate that sits closer to an
    already-selected neighbor than to q. Sorts the candidate arrays in
    place as a side effect."""
    _sort_pairs(cand_d, cand_i, n)
    m = 0
    for a in range(n):
        if m >= M:
            break
        c = cand_i[a]
        d_cq = cand_d[a]
        good = True
        for s in range(m):
            if _sqdist_rows(vectors, c, out_i[s]) < d_cq:
                good = False
                break
        if good:
            out_i[m] = c
            out_d[m] = d_cq
            m += 1
    return m


@njit(cache=True)
def _connect(vectors, nbrs, degs, cap, i, sel_i, sel_d, m,
             scr_d, scr_i, out_i, out_d):
    """Link new node i to its m selected neighbors, pruning any neighbor
    whose degree would exceed cap with the same selection heuristic."""
    for j in range(m):
        nbrs[i, j] = sel_i[j]
    degs[i] = m
    for j in range(m):
        s = sel_i[j]
        ds = degs[s]
        if ds < cap:
            nbrs[s, ds] = i
            degs[s] = ds + 1
        else:
            for t in range(ds):
                scr_i[t] = nbrs[s, t]
                scr_d[t] = _sqdist_rows(vectors, s, nbrs[s, t])
            scr_i[ds] = i
            scr_d[ds] = sel_d[j]
            m2 = _select_heuristic(vectors, vectors[s], scr_d, scr_i,
                                   ds + 1, cap, out_i, out_d)
            for t in range(m2):
                nbrs[s, t] = out_i[t]
            for t in range(m2, cap):
                nbrs[s, t] = -1
            degs[s] = m2


@njit(cache=True)
def build_graph(vectors, levels, M, efc):
    """Sequential HNSW insertion of all nodes. Returns fixed-capacity
    adjacency (layer 0 and upper layers) plus the final entry point."""
    n = vectors.shape[0]
    cap0 = 2 * M
    maxlvl = 0
    for i in range(n):
        if levels[i] > maxlvl:
            maxlvl = levels[i]
    n_up = maxlvl if maxlvl > 0 else 1
    nbr0 = np.full((n, cap0), -1, dtype=np.int32)
    deg0 = np.zeros(n, dtype=np.int32)
    nbru = np.full((n, n_up, M), -1, dtype=np.int32)
    degu = np.zeros((n, n_up), dtype=np.int32)

    visited = np.zeros(n, dtype=np.int64)
    epoch = 0
    cand_d = np.empty(n, dtype=np.float32)
    cand_i = np.empty(n, dtype=np.int32)
    res_d = np.empty(efc + 1, dtype=np.float32)
    res_i = np.empty(efc + 1, dtype=np.int32)
    eps_i = np.empty(efc + 1, dtype=np.int32)
    sel_i = np.empty(cap0 + 2, dtype=np.int32)
    sel_d = np.empty(cap0 + 2, dtype=np.float32)
    scr_i = np.empty(cap0 + 2, dtype=np.int32)
    scr_d = np.empty(cap0 + 2, dtype=np.float32)
    out_i = np.empty(cap0 + 2, dtype=np.int32)
    out_d = np.empty(cap0 + 2, dtype=np.float32)

    entry = 0
    entry_level = int(levels[0])
    for i in range(1, n):
        lvl = int(levels[i])
        q = vectors[i]
        cur = entry
        d_cur = _sqdist(vectors, cur, q)
        for lc in range(entry_level, lvl, -1):
            cur, d_cur = _greedy(vectors, nbru[:, lc - 1, :],
                                 degu[:, lc - 1], q, cur, d_cur)
        top = min(lvl, entry_level)
        n_eps = 1
        eps_i[0] = cur
        for lc in range(top, -1, -1):
            epoch += 1
            if lc == 0:
                rs = _search_layer(vectors, nbr0, deg0, q, eps_i, n_eps, efc,
                                   visited, epoch, cand_d, cand_i, res_d, res_i)
                m = _select_heuristic(vectors, q, res_d, res_i, rs, M,
                                      sel_i, sel_d)
                _connect(vectors, nbr0, deg0, cap0, i, sel_i, sel_d, m,
                         scr_d, scr_i, out_i, out_d)
            else:
                nbrs = nbru[:, lc - 1, :]
                degs = degu[:, lc - 1]
                rs = _search_layer(vectors, nbrs, degs, q, eps_i, n_eps, efc,
                                   visited, epoch, cand_d, cand_i, res_d, res_i)
                m = _select_heuristic(vectors, q, res_d, res_i, rs, M,
                                      sel_i, sel_d)
                _connect(vectors, nbrs, degs, M, i, sel_i, sel_d, m,
                         scr_d, scr_i, out_i, out_d)
            # selection sorted the result arrays ascending: reuse the full
            # candidate set as entry points for the next layer down
            n_eps = rs
            for j in range(rs):
                eps_i[j] = res_i[j]
        if lvl > entry_level:
            entry = i
            entry_level = lvl
    return nbr0, deg0, nbru, degu, entry
