"""Compiled CART kernels used by :mod:`apte.forest`.

Trees are stored as flat arrays. A node with ``feature < 0`` is a leaf;
otherwise rows with ``x[feature] <= threshold`` go to ``left``.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def build_tree(X, y, sample, mtry, min_leaf, uniforms):
    n = sample.shape[0]
    p = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap, dtype=np.float64)

    idx = sample.copy()
    perm = np.arange(p)
    chosen = np.empty(mtry, dtype=np.int64)
    xs = np.empty(n, dtype=np.float64)
    buf = np.empty(n, dtype=np.int64)

    stack_node = np.empty(cap, dtype=np.int64)
    stack_lo = np.empty(cap, dtype=np.int64)
    stack_hi = np.empty(cap, dtype=np.int64)
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        m = hi - lo

        total = 0.0
        for i in range(lo, hi):
            total += y[idx[i]]
        mean = total / m
        value[node] = mean
        if m < 2 * min_leaf:
            continue
        sse = 0.0
        for i in range(lo, hi):
            d = y[idx[i]] - mean
            sse += d * d
        if sse <= 0.0:
            continue

        # partial Fisher-Yates draw of mtry features, then ascending order
        for i in range(p):
            perm[i] = i
        for i in range(mtry):
            j = i + int(uniforms[node, i] * (p - i))
            if j >= p:
                j = p - 1
            tmp = perm[i]
            perm[i] = perm[j]
            perm[j] = tmp
            chosen[i] = perm[i]
        chosen.sort()

        # gains within tol count as ties, so equal partitions reached through
        # different features resolve to the lowest feature regardless of rounding
        tol = 1e-10 * sse
        best_gain = 0.0
        best_f = -1
        best_t = 0.0
        for c in range(mtry):
            f = chosen[c]
            for i in range(m):
                xs[i] = X[idx[lo + i], f]
            order = np.argsort(xs[:m], kind="mergesort")
            s = 0.0
            for k in range(m - 1):
                r = order[k]
                s += y[idx[lo + r]] - mean
                n_left = k + 1
                if n_left < min_leaf or m - n_left < min_leaf:
                    continue
                a = xs[r]
                b = xs[order[k + 1]]
                if a >= b:
                    continue
                gain = s * s * m / (n_left * (m - n_left))
                if gain > best_gain + tol:
                    best_gain = gain
                    best_f = f
                    t = 0.5 * (a + b)
                    if t >= b:
                        t = a
                    best_t = t
        if best_f < 0:
            continue

        # partition idx[lo:hi] stably around the threshold
        n_left = 0
        for i in range(lo, hi):
            if X[idx[i], best_f] <= best_t:
                buf[n_left] = idx[i]
                n_left += 1
        w = n_left
        for i in range(lo, hi):
            if X[idx[i], best_f] > best_t:
                buf[w] = idx[i]
                w += 1
        for i in range(m):
            idx[lo + i] = buf[i]

        feature[node] = best_f
        threshold[node] = best_t
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        # push right first so the left subtree is numbered first
        stack_node[top] = rnode
        stack_lo[top] = lo + n_left
        stack_hi[top] = hi
        top += 1
        stack_node[top] = lnode
        stack_lo[top] = lo
        stack_hi[top] = lo + n_left
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def predict_tree(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0], dtype=np.float64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@njit(cache=True, nogil=True)
def permutation_increase(feature, threshold, left, right, value, X, y, rows, perms):
    """Per-feature increase in this tree's MSE on ``rows`` after permuting.

    ``perms[j]`` is the permutation of ``rows`` applied to column ``j``.
    """
    p = X.shape[1]
    m = rows.shape[0]
    out = np.zeros(p, dtype=np.float64)
    if m == 0:
        return out
    Xo = np.empty((m, p), dtype=np.float64)
    yo = np.empty(m, dtype=np.float64)
    for i in range(m):
        yo[i] = y[rows[i]]
        for j in range(p):
            Xo[i, j] = X[rows[i], j]
    base = predict_tree(feature, threshold, left, right, value, Xo)
    base_mse = 0.0
    for i in range(m):
        d = base[i] - yo[i]
        base_mse += d * d
    base_mse /= m
    col = np.empty(m, dtype=np.float64)
    for j in range(p):
        for i in range(m):
            col[i] = Xo[i, j]
        for i in range(m):
            Xo[i, j] = col[perms[j, i]]
        pred = predict_tree(feature, threshold, left, right, value, Xo)
        mse = 0.0
        for i in range(m):
            d = pred[i] - yo[i]
            mse += d * d
        out[j] = mse / m - base_mse
        for i in range(m):
            Xo[i, j] = col[i]
    return out
