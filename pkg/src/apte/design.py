"""Treatment periods, exposure dichotomization and the lagged design matrix."""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, field, replace
from typing import IO, Optional, Sequence

import numpy as np

from apte.changepoint import Segmentation
from apte.errors import DataError, EstimationError
from apte.forest import ForestParams, ImportanceTable, fit_forest, oob_mse
from apte.series import WeeklySeries

logger = logging.getLogger(__name__)

TREATMENT = "treatment"
PERIOD = "period"
WEEK = "week"

CSC = "csc"
MEDIATOR = "mediator"
CONDITIONING = "conditioning"

_LAG = re.compile(r"^([yx])_lag(\d+)$")


@dataclass(frozen=True)
class Period:
    start: int  # 0-based position in the analyzed series, inclusive
    end: int
    mean_exposure: float

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class PeriodPlan:
    periods: tuple[Period, ...]
    treatment_labels: Optional[tuple[int, ...]] = None
    threshold: Optional[float] = None
    min_period_length: int = 1

    @property
    def n_weeks(self) -> int:
        return sum(p.length for p in self.periods)

    @property
    def lengths(self) -> list[int]:
        return [p.length for p in self.periods]

    @property
    def means(self) -> np.ndarray:
        return np.array([p.mean_exposure for p in self.periods])

    def labeled(self, threshold: float) -> "PeriodPlan":
        """Label 1 (high) when the period mean exposure is at or above ``threshold``."""
        labels = tuple(int(p.mean_exposure >= threshold) for p in self.periods)
        return replace(self, treatment_labels=labels, threshold=float(threshold))

    def with_labels(self, labels: Sequence[int]) -> "PeriodPlan":
        if len(labels) != len(self.periods):
            raise DataError("one label per period required")
        return replace(self, treatment_labels=tuple(int(a) for a in labels))

    def weekly_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-week period number (1-based), week-in-period (1-based) and treatment."""
        n = self.n_weeks
        period = np.empty(n, dtype=int)
        week = np.empty(n, dtype=int)
        treat = np.full(n, -1, dtype=int)
        for t, p in enumerate(self.periods):
            period[p.start : p.end + 1] = t + 1
            week[p.start : p.end + 1] = np.arange(1, p.length + 1)
            if self.treatment_labels is not None:
                treat[p.start : p.end + 1] = self.treatment_labels[t]
        return period, week, treat

    def max_length(self, level: int) -> int:
        """Longest observed period with treatment ``level`` (0 when none)."""
        if self.treatment_labels is None:
            raise DataError("plan is not labeled")
        return max((p.length for p, a in zip(self.periods, self.treatment_labels) if a == level), default=0)


def build_periods(exposure: Sequence[float], segmentation: Segmentation, min_length: int = 1) -> PeriodPlan:
    """Turn exposure segments into periods, merging those shorter than ``min_length``.

    A short segment joins whichever neighbor has the closer mean (the earlier
    neighbor on ties); merging repeats, earliest short segment first, until
    every period is long enough or only one remains.
    """
    x = np.asarray(exposure, dtype=float)
    if not segmentation.changepoints:
        raise DataError("empty segmentation")
    if segmentation.changepoints[-1] != len(x):
        raise DataError("segmentation does not cover the exposure series")
    if min_length < 1:
        raise DataError("min_length must be >= 1")
    bounds = [list(b) for b in segmentation.bounds]

    def mean(b) -> float:
        return float(np.mean(x[b[0] : b[1] + 1]))

    while len(bounds) > 1:
        short = [i for i, b in enumerate(bounds) if b[1] - b[0] + 1 < min_length]
        if not short:
            break
        i = short[0]
        mi = mean(bounds[i])
        options = [j for j in (i - 1, i + 1) if 0 <= j < len(bounds)]
        j = min(options, key=lambda k: (abs(mean(bounds[k]) - mi), k))
        lo, hi = min(i, j), max(i, j)
        bounds[lo : hi + 1] = [[bounds[lo][0], bounds[hi][1]]]
    periods = tuple(Period(b[0], b[1], mean(b)) for b in bounds)
    return PeriodPlan(periods, min_period_length=min_length)


def plan_from_lengths(lengths: Sequence[int], exposure: Sequence[float], labels=None) -> PeriodPlan:
    x = np.asarray(exposure, dtype=float)
    if sum(lengths) != len(x):
        raise DataError("period lengths do not tile the series")
    periods, start = [], 0
    for m in lengths:
        periods.append(Period(start, start + m - 1, float(np.mean(x[start : start + m]))))
        start += m
    plan = PeriodPlan(tuple(periods))
    return plan if labels is None else plan.with_labels(labels)


def candidate_thresholds(plan: PeriodPlan, quantiles: Sequence[float] = (0.25, 0.5, 0.75)) -> list[float]:
    return [float(q) for q in np.quantile(plan.means, quantiles)]


@dataclass(frozen=True)
class DesignMatrix:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    position: np.ndarray  # row's 0-based position in the analyzed series
    period: np.ndarray
    week: np.ndarray
    treatment: np.ndarray

    def __len__(self) -> int:
        return len(self.y)

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.feature_names.index(name)]

    def subset(self, names: Sequence[str]) -> "DesignMatrix":
        cols = [self.feature_names.index(n) for n in names]
        return replace(self, X=np.ascontiguousarray(self.X[:, cols]), feature_names=tuple(names))


def feature_names(lags_y: int, lags_x: int) -> tuple[str, ...]:
    return (
        (TREATMENT,)
        + tuple(f"y_lag{k}" for k in range(1, lags_y + 1))
        + tuple(f"x_lag{k}" for k in range(1, lags_x + 1))
        + (PERIOD, WEEK)
    )


def build_design_matrix(series: WeeklySeries, plan: PeriodPlan, lags_y: int, lags_x: int) -> DesignMatrix:
    """One row per week with a complete lag window.

    Lags reach across period boundaries; exposure lags are the continuous
    weekly exposure values, not the dichotomized treatment.
    """
    if lags_y < 0 or lags_x < 0:
        raise DataError("lag counts must be non-negative")
    if plan.treatment_labels is None:
        raise DataError("plan is not labeled")
    y = series.outcomes
    x = series.exposures
    n = len(y)
    if plan.n_weeks != n:
        raise DataError(f"plan covers {plan.n_weeks} weeks, series has {n}")
    if np.isnan(y).any() or np.isnan(x).any():
        raise DataError("series has missing values; interpolate first")
    first = max(lags_y, lags_x)
    if first >= n:
        raise DataError(f"lag counts ({lags_y}, {lags_x}) exceed series length {n}")
    period, week, treat = plan.weekly_arrays()
    pos = np.arange(first, n)
    cols = [treat[pos].astype(float)]
    cols += [y[pos - k] for k in range(1, lags_y + 1)]
    cols += [x[pos - k] for k in range(1, lags_x + 1)]
    cols += [period[pos].astype(float), week[pos].astype(float)]
    X = np.ascontiguousarray(np.column_stack(cols))
    return DesignMatrix(X, y[pos].copy(), feature_names(lags_y, lags_x), pos, period[pos], week[pos], treat[pos])


@dataclass(frozen=True)
class ThresholdSelection:
    threshold: float
    candidates: tuple[float, ...]
    oob_mse: tuple[Optional[float], ...]  # None for skipped candidates

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "candidates": list(self.candidates), "oob_mse": list(self.oob_mse)}


def select_threshold(
    candidates: Sequence[float],
    series: WeeklySeries,
    plan: PeriodPlan,
    lags_y: int,
    lags_x: int,
    params: ForestParams = ForestParams(),
) -> ThresholdSelection:
    """Pick the dichotomization threshold whose forest has the lowest OOB MSE.

    Every candidate is fit with the same forest seed, so candidates that induce
    the same labeling score identically; ties go to the smaller threshold.
    """
    if len(candidates) < 2:
        raise DataError("need at least two threshold candidates")
    mses: list[Optional[float]] = []
    for c in candidates:
        labeled = plan.labeled(c)
        if len(set(labeled.treatment_labels)) < 2:
            logger.warning("threshold %.4g yields a single treatment level; skipped", c)
            mses.append(None)
            continue
        dm = build_design_matrix(series, labeled, lags_y, lags_x)
        forest = fit_forest(dm.X, dm.y, params, dm.feature_names)
        mses.append(oob_mse(forest, dm.y))
    scored = [(m, c) for m, c in zip(mses, candidates) if m is not None]
    if not scored:
        raise EstimationError("every threshold candidate yields a single treatment level")
    best = min(scored)[1]
    return ThresholdSelection(float(best), tuple(float(c) for c in candidates), tuple(mses))


@dataclass(frozen=True)
class CausalRoleMap:
    features: tuple[str, ...]
    max_week: int

    def role(self, feature: str, week: int) -> str:
        """Causal role of ``feature`` for rows at within-period ``week``.

        A lag reaching back to or before the period start is a confounder or
        simultaneous cause; a lag inside the current period follows treatment
        assignment and is a mediator.
        """
        if feature == TREATMENT:
            raise KeyError("treatment has no role in the map")
        if feature == PERIOD:
            return CSC
        if feature == WEEK:
            return CONDITIONING
        m = _LAG.match(feature)
        if m is None:
            raise KeyError(f"unknown feature {feature!r}")
        return CSC if int(m.group(2)) >= week else MEDIATOR

    def csc_features(self, week: int) -> list[str]:
        return [f for f in self.features if self.role(f, week) == CSC]

    def table(self) -> dict[str, list[str]]:
        return {f: [self.role(f, j) for j in range(1, self.max_week + 1)] for f in self.features}


def select_predictors(
    importances: ImportanceTable, k: int, max_week: int, always_keep: str = TREATMENT
) -> tuple[list[str], CausalRoleMap]:
    """Top-``k`` features by importance plus ``always_keep``, in column order."""
    if k <= 0:
        raise DataError("k must be positive")
    if k > len(importances.feature_names):
        raise DataError(f"k={k} exceeds the {len(importances.feature_names)} features")
    top = set(importances.ranking()[:k]) | {always_keep}
    keep = [f for f in importances.feature_names if f in top]
    roles = CausalRoleMap(tuple(f for f in keep if f != always_keep), max_week)
    return keep, roles


def write_periods_csv(plan: PeriodPlan, stream: IO[str], week_offset: int = 1) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["period", "start_week", "length", "mean_exposure", "treatment"])
    labels = plan.treatment_labels or ("",) * len(plan.periods)
    for t, (p, a) in enumerate(zip(plan.periods, labels)):
        writer.writerow([t + 1, p.start + week_offset, p.length, repr(p.mean_exposure), a])


def read_periods_csv(stream: IO[str]) -> tuple[list[int], list[float], list[Optional[int]]]:
    lengths, means, labels = [], [], []
    for row in csv.DictReader(stream):
        lengths.append(int(row["length"]))
        means.append(float(row["mean_exposure"]))
        labels.append(int(row["treatment"]) if row.get("treatment") not in (None, "") else None)
    return lengths, means, labels
