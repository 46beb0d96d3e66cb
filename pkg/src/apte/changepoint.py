"""Mean-shift changepoint detection (single split and PELT).

Costs are Gaussian mean-change costs, i.e. within-segment residual sum of
squares divided by one global variance estimate. Changepoints are reported as
1-based positions of the last point of each segment, so the final changepoint
always equals the series length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from apte.errors import DataError

MIN_SEGMENT = 2


@dataclass(frozen=True)
class Segmentation:
    changepoints: tuple[int, ...]
    segment_means: tuple[float, ...]
    penalty_value: float
    method: str

    @property
    def bounds(self) -> list[tuple[int, int]]:
        """0-based inclusive ``(start, end)`` for each segment."""
        starts = (0,) + self.changepoints[:-1]
        return [(s, e - 1) for s, e in zip(starts, self.changepoints)]

    @property
    def lengths(self) -> list[int]:
        return [e - s + 1 for s, e in self.bounds]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "penalty": self.penalty_value,
            "changepoints": list(self.changepoints),
            "segment_means": list(self.segment_means),
        }


def estimate_variance(series: Sequence[float]) -> float:
    """Difference-based noise variance: mean squared first difference over 2."""
    y = np.asarray(series, dtype=float)
    if len(y) < 2:
        raise DataError("need at least two points to estimate variance")
    return float(np.mean(np.diff(y) ** 2) / 2.0)


def segment_cost(series: Sequence[float], lo: int, hi: int, variance: float) -> float:
    """Normalized residual sum of squares of ``series[lo..hi]`` (inclusive)."""
    if variance <= 0 or not math.isfinite(variance):
        raise DataError(f"variance must be positive, got {variance}")
    if lo > hi:
        raise DataError(f"empty segment [{lo}, {hi}]")
    seg = np.asarray(series, dtype=float)[lo : hi + 1]
    return float(np.sum((seg - seg.mean()) ** 2) / variance)


def mbic_penalty(n: int) -> float:
    if n < 4:
        raise DataError(f"penalty needs n >= 4, got {n}")
    return 3.0 * math.log(n)


class _Cost:
    """O(1) segment costs from prefix sums of the centered series."""

    def __init__(self, y: np.ndarray, variance: float):
        z = y - y.mean()
        self.s1 = np.concatenate([[0.0], np.cumsum(z)])
        self.s2 = np.concatenate([[0.0], np.cumsum(z * z)])
        self.inv_var = 1.0 / variance

    def __call__(self, tau: int, t: int) -> float:
        # points tau+1..t in 1-based terms
        s = self.s1[t] - self.s1[tau]
        rss = (self.s2[t] - self.s2[tau]) - s * s / (t - tau)
        return max(rss, 0.0) * self.inv_var


def _check(series: Sequence[float], penalty: float) -> np.ndarray:
    y = np.asarray(series, dtype=float)
    if y.ndim != 1 or len(y) < 4:
        raise DataError(f"changepoint detection needs at least 4 points, got {len(y)}")
    if not np.all(np.isfinite(y)):
        raise DataError("series contains missing or non-finite values")
    if penalty < 0 or math.isnan(penalty):
        raise DataError(f"penalty must be non-negative, got {penalty}")
    return y


def _build(y: np.ndarray, cps: list[int], penalty: float, method: str) -> Segmentation:
    starts = [0] + cps[:-1]
    means = tuple(float(np.mean(y[s:e])) for s, e in zip(starts, cps))
    return Segmentation(tuple(cps), means, float(penalty), method)


def detect_amoc(series: Sequence[float], penalty: Optional[float] = None) -> Segmentation:
    """At most one changepoint: the best split, kept only if it beats the penalty."""
    y = _check(series, 0.0 if penalty is None else penalty)
    n = len(y)
    penalty = mbic_penalty(n) if penalty is None else penalty
    variance = estimate_variance(y)
    if variance == 0.0:
        return _build(y, [n], penalty, "AMOC")
    cost = _Cost(y, variance)
    full = cost(0, n)
    best_tau, best = None, math.inf
    for tau in range(MIN_SEGMENT, n - MIN_SEGMENT + 1):
        c = cost(0, tau) + cost(tau, n)
        if c < best:
            best_tau, best = tau, c
    if best_tau is not None and full - best > penalty:
        return _build(y, [best_tau, n], penalty, "AMOC")
    return _build(y, [n], penalty, "AMOC")


def detect_pelt(series: Sequence[float], penalty: Optional[float] = None) -> Segmentation:
    """Exact penalized segmentation by pruned exact linear time search.

    Minimizes total cost plus ``penalty`` per changepoint with segments of at
    least two points. Pruning is delayed by the minimum segment length so the
    result is identical to the unpruned dynamic program, ties included.
    """
    y = _check(series, 0.0 if penalty is None else penalty)
    n = len(y)
    penalty = mbic_penalty(n) if penalty is None else penalty
    variance = estimate_variance(y)
    if variance == 0.0 or math.isinf(penalty):
        return _build(y, [n], penalty, "PELT")
    cost = _Cost(y, variance)
    m = MIN_SEGMENT

    F = np.full(n + 1, math.inf)
    F[0] = -penalty
    last = np.zeros(n + 1, dtype=int)
    active = [0]
    for t in range(m, n + 1):
        if t - m >= m:
            active.append(t - m)
        best, arg = math.inf, 0
        for tau in active:
            v = F[tau] + cost(tau, t) + penalty
            if v < best:
                best, arg = v, tau
        F[t], last[t] = best, arg
        # t' = t - m is a feasible last changepoint for every later end point
        tp = t - m
        if tp >= m and math.isfinite(F[tp]):
            active = [tau for tau in active if tau >= tp or F[tau] + cost(tau, tp) <= F[tp]]

    cps = []
    t = n
    while t > 0:
        cps.append(t)
        t = int(last[t])
    return _build(y, cps[::-1], penalty, "PELT")


def longest_segment(seg: Segmentation) -> tuple[int, int]:
    """0-based inclusive bounds of the longest segment (earliest on ties)."""
    return max(seg.bounds, key=lambda b: (b[1] - b[0], -b[0]))
