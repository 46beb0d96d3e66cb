import datetime as dt
import io

import numpy as np
import pytest

from apte.errors import DataError
from apte.series import (
    ColumnSchema,
    DailyRecord,
    from_arrays,
    ingest_daily,
    interpolate_missing,
    parse_start_day,
    read_weekly_csv,
    to_weekly,
    write_weekly_csv,
)


def _csv(rows, header="date,weight,activity"):
    return header + "\n" + "\n".join(rows) + "\n"


def test_ingest_parses_and_sorts():
    recs = ingest_daily(_csv(["2020-01-07,80.5,1", "2020-01-06,81,0", "2020-01-08,,"]))
    assert [r.date.day for r in recs] == [6, 7, 8]
    assert recs[0] == DailyRecord(dt.date(2020, 1, 6), 81.0, False)
    assert recs[2].weight is None and recs[2].activity is None


def test_ingest_accepts_bytes_with_bom_and_streams():
    text = _csv(["2020-01-06,81,yes"])
    a = ingest_daily(("\ufeff" + text).encode())
    b = ingest_daily(io.StringIO(text))
    assert a == b and a[0].activity is True


def test_ingest_custom_columns():
    recs = ingest_daily("day,kg,pa\n2020-01-06,70,1\n", ColumnSchema("day", "kg", "pa"))
    assert recs[0].weight == 70.0


def test_ingest_reports_every_malformed_row():
    with pytest.raises(DataError) as err:
        ingest_daily(_csv(["2020-01-06,abc,1", "2020-01-07,80,1", "notadate,80,1", "2020-01-09,80,maybe"]))
    msg = str(err.value)
    assert "line 2" in msg and "line 4" in msg and "line 5" in msg
    assert "line 3" not in msg


def test_ingest_rejects_nonpositive_weight():
    with pytest.raises(DataError, match="line 2"):
        ingest_daily(_csv(["2020-01-06,-3,1"]))


def test_duplicate_date_named():
    with pytest.raises(DataError, match="2020-01-06"):
        ingest_daily(_csv(["2020-01-06,80,1", "2020-01-06,81,1"]))


def test_missing_date_column():
    with pytest.raises(DataError, match="date"):
        ingest_daily("when,weight\n2020-01-01,3\n")


@pytest.mark.parametrize("value,expected", [("monday", 0), ("Sun", 6), (3, 3), ("4", 4)])
def test_parse_start_day(value, expected):
    assert parse_start_day(value) == expected


@pytest.mark.parametrize("value", ["mo", "funday", 7, -1])
def test_parse_start_day_rejects(value):
    with pytest.raises(DataError):
        parse_start_day(value)


def _two_weeks():
    start = dt.date(2020, 1, 6)  # a Monday
    recs = []
    for d in range(14):
        recs.append(DailyRecord(start + dt.timedelta(days=d), 80.0 + (d >= 7), d % 7 < (2 if d < 7 else 5)))
    return recs


def test_weekly_aggregation_and_centering():
    s = to_weekly(_two_weeks(), "monday")
    assert len(s) == 2
    assert s.center == pytest.approx(80.5)
    np.testing.assert_allclose(s.outcomes, [-0.5, 0.5])
    np.testing.assert_allclose(s.exposures, [2 / 7, 5 / 7])
    assert s.points[1].start == dt.date(2020, 1, 13)


def test_start_day_shifts_week_boundaries():
    s = to_weekly(_two_weeks(), "thursday")
    # Monday 6th falls in the week starting Thursday 2nd.
    assert len(s) == 3
    assert s.points[0].start == dt.date(2020, 1, 2)


def test_weekly_without_weights():
    with pytest.raises(DataError, match="no outcome data"):
        to_weekly([DailyRecord(dt.date(2020, 1, 1), None, True)])


def test_empty_weeks_are_missing_then_interpolated():
    recs = [r for r in _two_weeks()]
    recs += [DailyRecord(dt.date(2020, 1, 27) + dt.timedelta(days=d), 82.0, True) for d in range(7)]
    s = to_weekly(recs)
    assert len(s) == 4 and s.points[2].outcome is None
    filled = interpolate_missing(s)
    assert filled.points[2].imputed_outcome and filled.points[2].imputed_exposure
    assert not filled.points[1].imputed_outcome
    ys = filled.outcomes
    assert ys[2] == pytest.approx((ys[1] + ys[3]) / 2)


def test_interpolation_trims_edges_and_is_idempotent():
    s = from_arrays([np.nan, 1.0, np.nan, 3.0, np.nan], [0.2, 0.5, np.nan, 1.0, 0.1])
    out = interpolate_missing(s)
    assert out.trimmed_leading == 1 and out.trimmed_trailing == 1
    np.testing.assert_allclose(out.outcomes, [1.0, 2.0, 3.0])
    np.testing.assert_allclose(out.exposures, [0.5, 0.75, 1.0])
    assert list(out.week_indices) == [2, 3, 4]
    assert interpolate_missing(out) == out


def test_interpolation_all_missing():
    with pytest.raises(DataError):
        interpolate_missing(from_arrays([np.nan, np.nan], [0.1, 0.2]))


def test_weekly_csv_round_trip():
    s = interpolate_missing(from_arrays([0.1, np.nan, -0.3], [0.0, 0.5, 1.0]))
    buf = io.StringIO()
    write_weekly_csv(s, buf)
    back = read_weekly_csv(io.StringIO(buf.getvalue()))
    np.testing.assert_array_equal(back.outcomes, s.outcomes)
    assert [p.imputed_outcome for p in back.points] == [False, True, False]


def test_from_arrays_length_mismatch():
    with pytest.raises(DataError):
        from_arrays([1.0], [0.1, 0.2])
