"""Independent reference implementations used only by the tests."""

import itertools
import math

import numpy as np


def rss(y):
    y = np.asarray(y, dtype=float)
    return float(np.sum((y - y.mean()) ** 2))


def optimal_partition(y, penalty, min_seg=2):
    """Unpruned O(n^2) dynamic program over every admissible last changepoint."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    var = float(np.mean(np.diff(y) ** 2) / 2)
    F = [math.inf] * (n + 1)
    F[0] = -penalty
    back = [0] * (n + 1)
    for t in range(min_seg, n + 1):
        for s in range(0, t - min_seg + 1):
            if s != 0 and s < min_seg:
                continue
            v = F[s] + rss(y[s:t]) / var + penalty
            if v < F[t]:
                F[t], back[t] = v, s
    cps, t = [], n
    while t > 0:
        cps.append(t)
        t = back[t]
    return tuple(cps[::-1]), F[n]


def brute_force_partition(y, penalty, min_seg=2):
    """Enumerate every segmentation; only practical for n <= 12."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    var = float(np.mean(np.diff(y) ** 2) / 2)
    best, arg = math.inf, None
    inner = range(1, n)
    for k in range(0, n // min_seg):
        for cut in itertools.combinations(inner, k):
            bounds = (0,) + cut + (n,)
            if min(b - a for a, b in zip(bounds, bounds[1:])) < min_seg:
                continue
            v = sum(rss(y[a:b]) for a, b in zip(bounds, bounds[1:])) / var + penalty * k
            if v < best - 1e-12:
                best, arg = v, cut + (n,)
    return arg, best


def reference_tree(X, y, rows, min_leaf):
    """Greedy exhaustive CART on ``rows`` (duplicates allowed), all features.

    Returns a predict function. Ties go to the lowest feature, then the
    lowest threshold.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)

    def build(idx):
        vals = y[idx]
        sse = float(np.sum((vals - vals.mean()) ** 2))
        leaf = ("leaf", float(vals.mean()))
        if len(idx) < 2 * min_leaf or sse <= 0:
            return leaf
        best = None
        for f in range(X.shape[1]):
            xs = X[idx, f]
            levels = np.unique(xs)
            for a, b in zip(levels[:-1], levels[1:]):
                thr = (a + b) / 2
                left, right = idx[xs <= thr], idx[xs > thr]
                if len(left) < min_leaf or len(right) < min_leaf:
                    continue
                child = rss(y[left]) + rss(y[right])
                gain = sse - child
                if gain > (0.0 if best is None else best[0]) + 1e-10 * sse:
                    best = (gain, f, thr, left, right)
        if best is None:
            return leaf
        _, f, thr, left, right = best
        return ("split", f, thr, build(left), build(right))

    root = build(np.asarray(rows))

    def predict(x):
        node = root
        while node[0] == "split":
            node = node[3] if x[node[1]] <= node[2] else node[4]
        return node[1]

    return predict
