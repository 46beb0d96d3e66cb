"""Daily ingestion, weekly aggregation and gap interpolation."""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, Optional, Sequence, Union

import numpy as np

from apte.errors import DataError

logger = logging.getLogger(__name__)

DAY_NAMES = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")

_TRUE = {"1", "true", "t", "yes", "y"}
_FALSE = {"0", "false", "f", "no", "n"}


@dataclass(frozen=True)
class DailyRecord:
    date: dt.date
    weight: Optional[float] = None
    activity: Optional[bool] = None


@dataclass(frozen=True)
class ColumnSchema:
    """Names of the CSV columns holding each daily field."""

    date: str = "date"
    weight: str = "weight"
    activity: str = "activity"


@dataclass(frozen=True)
class WeeklyPoint:
    week_index: int
    outcome: Optional[float]
    exposure: Optional[float]
    imputed_outcome: bool = False
    imputed_exposure: bool = False
    start: Optional[dt.date] = None


@dataclass(frozen=True)
class WeeklySeries:
    points: tuple[WeeklyPoint, ...]
    center: float
    start_day: int = 0
    trimmed_leading: int = 0
    trimmed_trailing: int = 0

    def __len__(self) -> int:
        return len(self.points)

    @property
    def outcomes(self) -> np.ndarray:
        return np.array([np.nan if p.outcome is None else p.outcome for p in self.points])

    @property
    def exposures(self) -> np.ndarray:
        return np.array([np.nan if p.exposure is None else p.exposure for p in self.points])

    @property
    def week_indices(self) -> np.ndarray:
        return np.array([p.week_index for p in self.points], dtype=int)

    def window(self, lo: int, hi: int) -> "WeeklySeries":
        """Positions ``lo..hi`` inclusive, keeping the original week indices."""
        return replace(self, points=tuple(self.points[lo : hi + 1]))


def parse_start_day(value: Union[int, str]) -> int:
    if isinstance(value, int):
        if not 0 <= value <= 6:
            raise DataError(f"start day must be in 0..6, got {value}")
        return value
    key = str(value).strip().lower()
    if key.isdigit():
        return parse_start_day(int(key))
    for i, name in enumerate(DAY_NAMES):
        if name.startswith(key) and len(key) >= 3:
            return i
    raise DataError(f"unknown start day {value!r}")


def _parse_activity(cell: str) -> Optional[bool]:
    cell = cell.strip().lower()
    if cell == "":
        return None
    if cell in _TRUE:
        return True
    if cell in _FALSE:
        return False
    raise ValueError(f"activity {cell!r} is not a boolean")


def _parse_weight(cell: str) -> Optional[float]:
    cell = cell.strip()
    if cell == "":
        return None
    w = float(cell)
    if not math.isfinite(w) or w <= 0:
        raise ValueError(f"weight {cell!r} must be finite and positive")
    return w


def ingest_daily(
    source: Union[bytes, str, IO[bytes], IO[str]],
    schema: ColumnSchema = ColumnSchema(),
) -> list[DailyRecord]:
    """Parse a daily CSV into records sorted by date.

    Empty cells become missing values. Every malformed row is collected and
    reported together, by line number, in a single :class:`DataError`.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8-sig")
    elif isinstance(source, str):
        text = source
    else:
        raw = source.read()
        text = raw.decode("utf-8-sig") if isinstance(raw, bytes) else raw
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or schema.date not in reader.fieldnames:
        raise DataError(f"CSV has no date column {schema.date!r}")
    has_weight = schema.weight in reader.fieldnames
    has_activity = schema.activity in reader.fieldnames

    problems = []
    records = []
    seen: dict[dt.date, int] = {}
    for row in reader:
        line = reader.line_num
        try:
            date = dt.date.fromisoformat((row[schema.date] or "").strip())
        except ValueError:
            problems.append(f"line {line}: unparseable date {row[schema.date]!r}")
            continue
        if date in seen:
            raise DataError(f"duplicate date {date.isoformat()} (lines {seen[date]} and {line})")
        seen[date] = line
        try:
            weight = _parse_weight(row[schema.weight] or "") if has_weight else None
            activity = _parse_activity(row[schema.activity] or "") if has_activity else None
        except ValueError as exc:
            problems.append(f"line {line}: {exc}")
            continue
        records.append(DailyRecord(date, weight, activity))
    if problems:
        raise DataError("malformed rows:\n  " + "\n  ".join(problems))
    records.sort(key=lambda r: r.date)
    return records


def _week_start(day: dt.date, start_day: int) -> dt.date:
    return day - dt.timedelta(days=(day.weekday() - start_day) % 7)


def to_weekly(records: Iterable[DailyRecord], start_day: Union[int, str] = 0) -> WeeklySeries:
    """Aggregate daily records into calendar weeks beginning on ``start_day``.

    The outcome is the weekly mean of centered weight over days with a weight;
    the exposure is the share of those same days with activity reported.
    """
    start_day = parse_start_day(start_day)
    records = sorted(records, key=lambda r: r.date)
    if len({r.date for r in records}) != len(records):
        raise DataError("duplicate dates in daily records")
    weights = [r.weight for r in records if r.weight is not None]
    if not weights:
        raise DataError("no outcome data")
    center = math.fsum(weights) / len(weights)

    first = _week_start(records[0].date, start_day)
    n_weeks = (_week_start(records[-1].date, start_day) - first).days // 7 + 1
    sums = [[] for _ in range(n_weeks)]
    active = [0] * n_weeks
    for r in records:
        if r.weight is None:
            continue
        k = (r.date - first).days // 7
        sums[k].append(r.weight - center)
        active[k] += bool(r.activity)

    points = []
    for k in range(n_weeks):
        if sums[k]:
            outcome = math.fsum(sums[k]) / len(sums[k])
            exposure = active[k] / len(sums[k])
        else:
            outcome = exposure = None
        points.append(WeeklyPoint(k + 1, outcome, exposure, start=first + dt.timedelta(days=7 * k)))
    return WeeklySeries(tuple(points), center, start_day)


def _interp(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    missing = np.isnan(values)
    if not missing.any():
        return values, missing
    pos = np.arange(len(values))
    filled = values.copy()
    filled[missing] = np.interp(pos[missing], pos[~missing], values[~missing])
    return filled, missing


def interpolate_missing(series: WeeklySeries) -> WeeklySeries:
    """Fill interior gaps by linear interpolation; trim leading/trailing gaps.

    Exposures are clamped to [0, 1] after interpolation. Existing imputation
    flags are preserved, so the operation is idempotent.
    """
    y, x = series.outcomes, series.exposures
    complete = ~(np.isnan(y) | np.isnan(x))
    if not complete.any():
        raise DataError("every weekly outcome or exposure is missing")
    idx = np.flatnonzero(complete)
    lo, hi = int(idx[0]), int(idx[-1])
    if lo or hi < len(series) - 1:
        logger.info("trimmed %d leading and %d trailing incomplete weeks", lo, len(series) - 1 - hi)

    y_filled, y_missing = _interp(y[lo : hi + 1])
    x_filled, x_missing = _interp(x[lo : hi + 1])
    x_filled = np.clip(x_filled, 0.0, 1.0)
    points = tuple(
        replace(
            p,
            outcome=float(y_filled[i]),
            exposure=float(x_filled[i]),
            imputed_outcome=p.imputed_outcome or bool(y_missing[i]),
            imputed_exposure=p.imputed_exposure or bool(x_missing[i]),
        )
        for i, p in enumerate(series.points[lo : hi + 1])
    )
    return replace(
        series,
        points=points,
        trimmed_leading=series.trimmed_leading + lo,
        trimmed_trailing=series.trimmed_trailing + len(series) - 1 - hi,
    )


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def write_weekly_csv(series: WeeklySeries, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["week_index", "outcome", "exposure", "imputed_outcome", "imputed_exposure"])
    for p in series.points:
        writer.writerow(
            [p.week_index, _fmt(p.outcome), _fmt(p.exposure), int(p.imputed_outcome), int(p.imputed_exposure)]
        )


def read_weekly_csv(stream: IO[str], center: float = 0.0) -> WeeklySeries:
    points = []
    for row in csv.DictReader(stream):
        points.append(
            WeeklyPoint(
                int(row["week_index"]),
                float(row["outcome"]) if row["outcome"] else None,
                float(row["exposure"]) if row["exposure"] else None,
                row.get("imputed_outcome", "0") == "1",
                row.get("imputed_exposure", "0") == "1",
            )
        )
    return WeeklySeries(tuple(points), center)


def from_arrays(
    outcome: Sequence[float], exposure: Sequence[float], center: float = 0.0
) -> WeeklySeries:
    """Build a complete weekly series directly from outcome/exposure arrays."""
    if len(outcome) != len(exposure):
        raise DataError("outcome and exposure lengths differ")
    points = tuple(
        WeeklyPoint(i + 1, float(y), float(x)) for i, (y, x) in enumerate(zip(outcome, exposure))
    )
    return WeeklySeries(points, center)
