"""Numba kernels for weighted least-squares regression trees.

Trees are grown depth-first with exact split search: at every node the
candidate columns are visited in a random order and all midpoints between
distinct consecutive values are scored by the reduction in weighted squared
error. A node becomes a leaf when it is pure, when it hits
``max_depth``, or when no candidate column varies inside it.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


@njit(cache=True)
def mix64(z):
    z = np.uint64(z)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _next(state):
    # splitmix64
    state[0] = state[0] + _GOLDEN
    return mix64(state[0])


@njit(cache=True)
def _randbelow(state, n):
    return np.int64(_next(state) % np.uint64(n))


@njit(cache=True)
def derive_seed(seed, index):
    """Independent 64-bit stream seed for item ``index`` of a seeded family."""
    return mix64(np.uint64(seed) ^ mix64(np.uint64(index) * _GOLDEN + np.uint64(1)))


@njit(cache=True)
def bootstrap_counts(n, seed):
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed)
    counts = np.zeros(n, dtype=np.float64)
    for _ in range(n):
        counts[_randbelow(state, n)] += 1.0
    return counts


def presort(X: np.ndarray) -> np.ndarray:
    """Per-column row order, shape ``(p, n)``, shared by every tree on ``X``."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int64))


@njit(cache=True)
def build_tree(Xt, y, w, order, pool, n_try, max_depth, seed):
    """Grow one tree.

    Xt:        (p, n) feature matrix, transposed for column locality
    y, w:      targets and non-negative row weights (zero weight = unused row)
    order:     (p, n) presorted row order per column, from ``presort``
    pool:      columns the tree may split on
    n_try:     non-constant columns to score per node before settling
    max_depth: -1 for unlimited
    Returns (feature, threshold, left, right, value); feature == -1 marks a leaf.

    Every pool column keeps its own sorted list of the tree's rows. A node
    owns the same segment ``[start, end)`` in all lists, so split search is
    a linear scan and a split is a stable partition of each list.
    """
    n = Xt.shape[1]
    n_pool = pool.shape[0]
    n_rows = 0
    for r in range(n):
        if w[r] > 0:
            n_rows += 1
    lists = np.empty((n_pool, n_rows), dtype=np.int64)
    for a in range(n_pool):
        f = pool[a]
        c = 0
        for t in range(n):
            r = order[f, t]
            if w[r] > 0:
                lists[a, c] = r
                c += 1

    cap = 2 * n_rows + 1
    feature = np.full(cap, -1, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    value = np.zeros(cap, dtype=np.float64)

    perm = np.arange(n_pool)
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed)
    goes_left = np.zeros(n, dtype=np.int64)
    tmp = np.empty(n_rows, dtype=np.int64)

    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    st_start[0] = 0
    st_end[0] = n_rows
    st_depth[0] = 0
    st_node[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        node = st_node[top]
        m = end - start

        # node value as a shifted mean: exact when all targets are equal
        y0 = y[lists[0, start]]
        wsum = 0.0
        csum = 0.0
        pure = True
        for t in range(start, end):
            r = lists[0, t]
            wsum += w[r]
            csum += w[r] * (y[r] - y0)
            if y[r] != y0:
                pure = False
        value[node] = y0 + csum / wsum
        if pure or m < 2 or (max_depth >= 0 and depth >= max_depth):
            continue
        shift = y0 + csum / wsum

        best_gain = -np.inf
        best_a = -1
        best_thr = 0.0
        visited = 0
        for t in range(n_pool):
            if visited >= n_try and best_a >= 0:
                break
            j = t + _randbelow(state, n_pool - t)
            swap = perm[t]
            perm[t] = perm[j]
            perm[j] = swap
            a = perm[t]
            f = pool[a]
            if Xt[f, lists[a, start]] == Xt[f, lists[a, end - 1]]:
                continue
            visited += 1

            wl = 0.0
            sl = 0.0
            for u in range(start, end - 1):
                r = lists[a, u]
                wl += w[r]
                sl += w[r] * (y[r] - shift)
                v_here = Xt[f, r]
                v_next = Xt[f, lists[a, u + 1]]
                if v_here == v_next:
                    continue
                # centred total is ~0, so the right-hand sum is -sl and the
                # gain is sl^2 * wsum / (wl * wr); compare without dividing
                num = sl * sl * wsum
                den = wl * (wsum - wl)
                if num > best_gain * den:
                    best_gain = num / den
                    best_a = a
                    thr = 0.5 * (v_here + v_next)
                    if thr >= v_next:
                        thr = v_here
                    best_thr = thr

        if best_a < 0:
            continue

        f = pool[best_a]
        n_left = 0
        for t in range(start, end):
            r = lists[0, t]
            side = Xt[f, r] <= best_thr
            goes_left[r] = side
            if side:
                n_left += 1
        for a in range(n_pool):
            # branchless stable partition: write both ways, advance one cursor
            nl = start
            nr = 0
            for t in range(start, end):
                r = lists[a, t]
                g = goes_left[r]
                lists[a, nl] = r
                tmp[nr] = r
                nl += g
                nr += 1 - g
            for t in range(nr):
                lists[a, nl + t] = tmp[t]

        feature[node] = f
        threshold[node] = best_thr
        lchild = n_nodes
        rchild = n_nodes + 1
        n_nodes += 2
        left[node] = lchild
        right[node] = rchild
        st_start[top] = start + n_left
        st_end[top] = end
        st_depth[top] = depth + 1
        st_node[top] = rchild
        top += 1
        st_start[top] = start
        st_end[top] = start + n_left
        st_depth[top] = depth + 1
        st_node[top] = lchild
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True)
def predict_tree(X, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out

