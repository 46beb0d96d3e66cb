"""ADF and KPSS unit-root tests and the CSC stationarity summary.

Both tests report p-values by linear interpolation in the published
critical-value tables, together with the bracket of tabulated levels that
encloses the statistic.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Optional, Sequence

import numpy as np

from apte.errors import DataError, EstimationError

logger = logging.getLogger(__name__)

REJECT = "reject"
FAIL_TO_REJECT = "fail-to-reject"

# Dickey-Fuller tau critical values (Fuller 1976), rows are sample sizes.
_DF_SIZES = np.array([25, 50, 100, 250, 500, 100000], dtype=float)
_DF_PROBS = np.array([0.01, 0.025, 0.05, 0.10, 0.90, 0.95, 0.975, 0.99])
_DF_TREND = -np.array(
    [
        [4.38, 4.15, 4.04, 3.99, 3.98, 3.96],
        [3.95, 3.80, 3.73, 3.69, 3.68, 3.66],
        [3.60, 3.50, 3.45, 3.43, 3.42, 3.41],
        [3.24, 3.18, 3.15, 3.13, 3.13, 3.12],
        [1.14, 1.19, 1.22, 1.23, 1.24, 1.25],
        [0.80, 0.87, 0.90, 0.92, 0.93, 0.94],
        [0.50, 0.58, 0.62, 0.64, 0.65, 0.66],
        [0.15, 0.24, 0.28, 0.31, 0.32, 0.33],
    ]
)
_DF_CONST = -np.array(
    [
        [3.75, 3.58, 3.51, 3.46, 3.44, 3.43],
        [3.33, 3.22, 3.17, 3.14, 3.13, 3.12],
        [3.00, 2.93, 2.89, 2.88, 2.87, 2.86],
        [2.63, 2.60, 2.58, 2.57, 2.57, 2.57],
        [0.37, 0.40, 0.42, 0.42, 0.43, 0.44],
        [0.00, 0.03, 0.05, 0.06, 0.07, 0.07],
        [-0.34, -0.29, -0.26, -0.24, -0.24, -0.23],
        [-0.72, -0.66, -0.63, -0.62, -0.61, -0.60],
    ]
)

# KPSS level-stationarity critical values at 10%, 5%, 2.5%, 1%.
KPSS_LEVEL_CRITICAL = np.array([0.347, 0.463, 0.574, 0.739])
_KPSS_PROBS = np.array([0.10, 0.05, 0.025, 0.01])


@dataclass(frozen=True)
class UnitRootResult:
    test: str
    statistic: float
    lag_order: int
    n: int
    p_value: float
    p_value_bracket: tuple[float, float]
    decision_at_005: str

    @property
    def rejects(self) -> bool:
        return self.decision_at_005 == REJECT

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "statistic": self.statistic,
            "lag_order": self.lag_order,
            "n": self.n,
            "p_value": self.p_value,
            "p_value_bracket": list(self.p_value_bracket),
            "decision_at_005": self.decision_at_005,
        }


def _as_series(series: Sequence[float]) -> np.ndarray:
    y = np.asarray(series, dtype=float)
    if y.ndim != 1 or not np.all(np.isfinite(y)):
        raise DataError("series must be one-dimensional and finite")
    if len(y) > 1 and np.ptp(y) == 0.0:
        raise DataError("degenerate series (zero variance)")
    return y


def _bracket(probs: np.ndarray, crit: np.ndarray, stat: float, lower_tail: bool) -> tuple[float, float]:
    """Tabulated probability levels enclosing ``stat``.

    ``crit`` is increasing in the statistic; ``probs`` are the matching
    p-values for a test rejecting in the lower (ADF) or upper (KPSS) tail.
    """
    levels = np.concatenate([[0.0], probs, [1.0]]) if lower_tail else np.concatenate([[1.0], probs, [0.0]])
    k = int(np.searchsorted(crit, stat, side="right"))
    a, b = float(levels[k]), float(levels[k + 1])
    return (min(a, b), max(a, b))


def default_adf_lag(n: int) -> int:
    return int(math.floor((n - 1) ** (1.0 / 3.0)))


def adf_test(series: Sequence[float], lag_order: Optional[int] = None, trend: bool = True) -> UnitRootResult:
    """Augmented Dickey-Fuller test with constant and (by default) linear trend.

    Regresses the differenced series on its lagged level, deterministic terms
    and ``lag_order`` lagged differences; the statistic is the t-ratio of the
    lagged level. The null is a unit root, so rejection suggests stationarity.
    """
    y = _as_series(series)
    n_obs = len(y)
    k = default_adf_lag(n_obs) if lag_order is None else int(lag_order)
    if k < 0:
        raise DataError("lag order must be non-negative")
    if n_obs < 3 * (k + 2):
        raise DataError(f"series of length {n_obs} too short for ADF with {k} lags")

    dy = np.diff(y)
    n = len(dy)
    rows = np.arange(k, n)
    cols = [y[rows], np.ones(len(rows))]
    if trend:
        cols.append(rows + 1.0)
    cols += [dy[rows - i] for i in range(1, k + 1)]
    X = np.column_stack(cols)
    target = dy[rows]
    dof = len(rows) - X.shape[1]
    if dof <= 0:
        raise DataError("not enough observations for the ADF regression")
    beta, _, rank, _ = np.linalg.lstsq(X, target, rcond=None)
    if rank < X.shape[1]:
        raise DataError("degenerate series (collinear ADF regression)")
    resid = target - X @ beta
    sigma2 = float(resid @ resid) / dof
    if sigma2 <= 1e-24 * max(1.0, float(target @ target)):
        raise DataError("degenerate series (perfect ADF fit)")
    cov = sigma2 * np.linalg.inv(X.T @ X)
    stat = float(beta[0] / math.sqrt(cov[0, 0]))

    table = _DF_TREND if trend else _DF_CONST
    crit = np.array([np.interp(n, _DF_SIZES, row) for row in table])
    p = float(np.interp(stat, crit, _DF_PROBS))
    decision = REJECT if stat <= crit[2] else FAIL_TO_REJECT
    return UnitRootResult(
        "ADF" if trend else "ADF-const", stat, k, n_obs, p, _bracket(_DF_PROBS, crit, stat, True), decision
    )


def default_kpss_lag(n: int) -> int:
    return int(math.floor(3.0 * math.sqrt(n) / 13.0))


def kpss_test(series: Sequence[float], lag_order: Optional[int] = None) -> UnitRootResult:
    """KPSS test of level stationarity with a Bartlett long-run variance."""
    y = _as_series(series)
    n = len(y)
    if n < 10:
        raise DataError(f"series of length {n} too short for KPSS (need 10)")
    lags = default_kpss_lag(n) if lag_order is None else int(lag_order)
    if not 0 <= lags < n:
        raise DataError(f"invalid KPSS lag order {lags}")
    e = y - y.mean()
    eta = float(np.sum(np.cumsum(e) ** 2)) / n**2
    s2 = float(e @ e) / n
    for i in range(1, lags + 1):
        s2 += 2.0 * (1.0 - i / (lags + 1.0)) * float(e[i:] @ e[:-i]) / n
    if s2 <= 0:
        raise DataError("degenerate series (non-positive long-run variance)")
    stat = eta / s2
    p = float(np.interp(stat, KPSS_LEVEL_CRITICAL, _KPSS_PROBS))
    decision = REJECT if stat >= KPSS_LEVEL_CRITICAL[1] else FAIL_TO_REJECT
    return UnitRootResult(
        "KPSS", stat, lags, n, p, _bracket(_KPSS_PROBS, KPSS_LEVEL_CRITICAL, stat, False), decision
    )


@dataclass(frozen=True)
class StationarityFlag:
    key: tuple
    flag: int
    adf: Optional[UnitRootResult]
    kpss: Optional[UnitRootResult]
    source: str = "stratum"


@dataclass(frozen=True)
class CscStationaritySummary:
    flags: tuple[StationarityFlag, ...]
    overall: float
    untested: tuple[tuple, ...] = ()

    @property
    def per_variable_flags(self) -> dict:
        return {f.key: f.flag for f in self.flags}

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "n_flags": len(self.flags),
            "flags": [
                {
                    "week": f.key[0],
                    "variable": f.key[1],
                    "flag": f.flag,
                    "source": f.source,
                    "adf": None if f.adf is None else f.adf.to_dict(),
                    "kpss": None if f.kpss is None else f.kpss.to_dict(),
                }
                for f in self.flags
            ],
            "untested": [list(k) for k in self.untested],
        }


def stationarity_flag(series: Sequence[float]) -> tuple[Optional[int], Optional[UnitRootResult], Optional[UnitRootResult]]:
    """1 if ADF rejects a unit root or KPSS fails to reject stationarity.

    When only one test can be computed it decides alone; ``None`` when neither can.
    """
    adf = kpss = None
    try:
        adf = adf_test(series)
    except DataError:
        pass
    try:
        kpss = kpss_test(series)
    except DataError:
        pass
    if adf is None and kpss is None:
        return None, None, None
    passed = (adf is not None and adf.rejects) or (kpss is not None and not kpss.rejects)
    return int(passed), adf, kpss


def csc_stationarity(
    csc_panel: Mapping[tuple[Hashable, Hashable], Sequence[float]],
    sources: Optional[Mapping[tuple, str]] = None,
) -> CscStationaritySummary:
    """Overall CSC stationarity: the mean of per-(week, variable) pass flags."""
    if not csc_panel:
        raise DataError("empty CSC panel")
    flags, untested = [], []
    for key in sorted(csc_panel, key=lambda k: (k[0], str(k[1]))):
        flag, adf, kpss = stationarity_flag(csc_panel[key])
        if flag is None:
            untested.append(tuple(key))
            continue
        flags.append(StationarityFlag(tuple(key), flag, adf, kpss, (sources or {}).get(key, "stratum")))
    if not flags:
        raise EstimationError("no CSC series long enough for either unit-root test")
    overall = math.fsum(f.flag for f in flags) / len(flags)
    return CscStationaritySummary(tuple(flags), overall, tuple(untested))
