import warnings

import numpy as np
import pytest

from apte.errors import DataError, EstimationError
from apte.stationarity import (
    KPSS_LEVEL_CRITICAL,
    adf_test,
    csc_stationarity,
    default_adf_lag,
    default_kpss_lag,
    kpss_test,
    stationarity_flag,
)

sm = pytest.importorskip("statsmodels.tsa.stattools")


def _fixtures():
    out = []
    for s in range(6):
        rng = np.random.default_rng(100 + s)
        n = int(rng.integers(40, 300))
        e = rng.normal(size=n)
        if s % 3 == 0:
            out.append(np.cumsum(e))
        elif s % 3 == 1:
            y = np.zeros(n)
            for t in range(1, n):
                y[t] = 0.6 * y[t - 1] + e[t]
            out.append(y)
        else:
            out.append(e + 0.01 * np.arange(n))
    return out


@pytest.mark.parametrize("idx", range(6))
def test_adf_matches_reference(idx):
    y = _fixtures()[idx]
    k = default_adf_lag(len(y))
    ours = adf_test(y)
    ref = sm.adfuller(y, maxlag=k, regression="ct", autolag=None)
    assert ours.lag_order == k
    assert ours.statistic == pytest.approx(ref[0], abs=1e-8)


@pytest.mark.parametrize("idx", range(6))
def test_kpss_matches_reference(idx):
    y = _fixtures()[idx]
    k = default_kpss_lag(len(y))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ref = sm.kpss(y, regression="c", nlags=k)
    ours = kpss_test(y)
    assert ours.statistic == pytest.approx(ref[0], abs=1e-10)


def test_adf_constant_only_matches_reference():
    y = _fixtures()[1]
    ref = sm.adfuller(y, maxlag=2, regression="c", autolag=None)
    assert adf_test(y, 2, trend=False).statistic == pytest.approx(ref[0], abs=1e-8)


def test_default_lags():
    assert default_adf_lag(200) == 5
    assert default_kpss_lag(200) == 3


def test_kpss_decision_and_bracket():
    rng = np.random.default_rng(0)
    walk = np.cumsum(rng.normal(size=300))
    r = kpss_test(walk)
    assert r.statistic > KPSS_LEVEL_CRITICAL[3]
    assert r.rejects and r.p_value == pytest.approx(0.01)
    assert r.p_value_bracket == (0.0, 0.01)


def test_adf_rejects_white_noise():
    rng = np.random.default_rng(1)
    r = adf_test(rng.normal(size=300))
    assert r.rejects and r.p_value <= 0.05
    lo, hi = r.p_value_bracket
    assert lo <= r.p_value <= hi


def test_degenerate_and_short_series():
    with pytest.raises(DataError, match="degenerate"):
        adf_test(np.ones(50))
    with pytest.raises(DataError, match="degenerate"):
        kpss_test(np.full(30, 2.0))
    with pytest.raises(DataError):
        kpss_test(np.arange(5.0))
    with pytest.raises(DataError):
        adf_test(np.arange(8.0) ** 2)


def test_flag_logic():
    rng = np.random.default_rng(2)
    flag, adf, kpss = stationarity_flag(rng.normal(size=200))
    assert flag == 1 and adf is not None and kpss is not None
    flag, _, _ = stationarity_flag(np.cumsum(rng.normal(size=400)) * 10)
    assert flag == 0


def test_flag_untestable_short_series():
    assert stationarity_flag([1.0, 2.0, 0.5]) == (None, None, None)


def test_csc_summary_counts_flags():
    rng = np.random.default_rng(3)
    panel = {
        (1, "y_lag1"): rng.normal(size=100),
        (1, "x_lag1"): np.cumsum(rng.normal(size=400)) * 5,
        (2, "y_lag2"): [1.0, 2.0],
    }
    s = csc_stationarity(panel, {(1, "x_lag1"): "pooled"})
    assert s.overall == pytest.approx(0.5)
    assert s.untested == ((2, "y_lag2"),)
    assert s.per_variable_flags == {(1, "x_lag1"): 0, (1, "y_lag1"): 1}
    d = s.to_dict()
    assert d["n_flags"] == 2 and d["flags"][0]["source"] == "pooled"


def test_csc_summary_errors():
    with pytest.raises(DataError):
        csc_stationarity({})
    with pytest.raises(EstimationError):
        csc_stationarity({(1, "a"): [1.0, 2.0, 3.0]})


def test_kpss_size_small_sample():
    rej = sum(kpss_test(np.random.default_rng([7, s]).normal(size=200)).rejects for s in range(300))
    assert 0.02 <= rej / 300 <= 0.09
