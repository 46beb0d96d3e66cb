"""G-formula and naive estimation of mean potential outcomes and the APTE."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional, Sequence

import numpy as np

from apte.design import TREATMENT, CausalRoleMap, DesignMatrix, PeriodPlan
from apte.errors import DataError, EstimationError
from apte.forest import Forest

REPORT_FORMAT = "apte-report"
REPORT_VERSION = 1
CSV_COLUMNS = ("week", "E1", "E0", "APTE", "E1_naive", "E0_naive", "APTE_naive")


@dataclass(frozen=True)
class PoEstimate:
    week: int
    level: int
    mean_po: Optional[float]
    n_rows_marginalized: int
    naive_mean_po: Optional[float] = None
    naive_n_rows: int = 0
    estimable: bool = False
    reason: str = ""


def predict_pos(forest: Optional[Forest], design: DesignMatrix, roles: Optional[CausalRoleMap] = None) -> np.ndarray:
    """Predicted potential outcomes, shape ``(rows, 2)``, column ``a`` for level ``a``.

    Each row is copied with treatment set to ``a``; every other feature,
    mediators included, keeps its observed value.
    """
    if forest is None or not forest.trees:
        raise EstimationError("forest is not fitted")
    if tuple(forest.feature_names) != tuple(design.feature_names):
        raise DataError("design columns do not match the forest's features")
    if roles is not None and TREATMENT in roles.features:
        raise DataError("treatment cannot carry a causal role")
    col = design.feature_names.index(TREATMENT)
    out = np.empty((len(design), 2))
    for a in (0, 1):
        X = design.X.copy()
        X[:, col] = a
        out[:, a] = forest.predict(X)
    return out


def _positivity(plan: PeriodPlan, week: int, level: int) -> bool:
    return plan.max_length(level) >= week


def gformula_mean_po(ppos: np.ndarray, design: DesignMatrix, plan: PeriodPlan, week: int, level: int) -> PoEstimate:
    """Mean PPO under ``level`` over every row at ``week``, whatever its observed treatment."""
    at_week = design.week == week
    n = int(at_week.sum())
    naive_rows = at_week & (design.treatment == level)
    n_naive = int(naive_rows.sum())
    naive = float(np.mean(ppos[naive_rows, level])) if n_naive else None
    if not _positivity(plan, week, level):
        return PoEstimate(week, level, None, n, None, n_naive, False, f"no level-{level} period reaches week {week}")
    if n == 0:
        return PoEstimate(week, level, None, 0, None, 0, False, f"no design rows at week {week}")
    return PoEstimate(week, level, float(np.mean(ppos[at_week, level])), n, naive, n_naive, True)


def naive_mean_po(ppos: np.ndarray, design: DesignMatrix, week: int, level: int) -> PoEstimate:
    """Mean PPO under ``level`` over rows at ``week`` observed at that level."""
    rows = (design.week == week) & (design.treatment == level)
    n = int(rows.sum())
    if n == 0:
        return PoEstimate(week, level, None, 0, None, 0, False, f"no level-{level} rows at week {week}")
    value = float(np.mean(ppos[rows, level]))
    return PoEstimate(week, level, None, 0, value, n, True)


@dataclass(frozen=True)
class ReportRow:
    week: int
    e1: Optional[float] = None
    e0: Optional[float] = None
    apte: Optional[float] = None
    e1_naive: Optional[float] = None
    e0_naive: Optional[float] = None
    apte_naive: Optional[float] = None

    def values(self) -> tuple:
        return (self.week, self.e1, self.e0, self.apte, self.e1_naive, self.e0_naive, self.apte_naive)


@dataclass(frozen=True)
class Observation:
    """One design row as drawn in the plots."""

    position: int
    period: int
    week: int
    treatment: int
    outcome: float
    ppo1: float
    ppo0: float


@dataclass(frozen=True)
class ApteReport:
    rows: tuple[ReportRow, ...]
    horizon: int
    contrast: str = "difference"
    csc_stationarity: Optional[dict] = None
    config: dict = field(default_factory=dict)
    observations: tuple[Observation, ...] = ()
    extras: dict = field(default_factory=dict)

    def row(self, week: int) -> ReportRow:
        return self.rows[week - 1]

    @property
    def has_naive(self) -> bool:
        return any(r.apte_naive is not None for r in self.rows)

    def to_json(self) -> str:
        doc = {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "contrast": self.contrast,
            "horizon": self.horizon,
            "rows": [dict(zip(CSV_COLUMNS, r.values())) for r in self.rows],
            "csc_stationarity": self.csc_stationarity,
            "config": self.config,
            "observations": [
                [o.position, o.period, o.week, o.treatment, o.outcome, o.ppo1, o.ppo0] for o in self.observations
            ],
            "extras": self.extras,
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ApteReport":
        doc = json.loads(text)
        if doc.get("format") != REPORT_FORMAT:
            raise DataError("not an APTE report document")
        rows = tuple(ReportRow(*(r[c] for c in CSV_COLUMNS)) for r in doc["rows"])
        obs = tuple(Observation(*o) for o in doc.get("observations", []))
        return cls(
            rows,
            doc["horizon"],
            doc.get("contrast", "difference"),
            doc.get("csc_stationarity"),
            doc.get("config", {}),
            obs,
            doc.get("extras", {}),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow([r.week] + [_round3(v) for v in r.values()[1:]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ApteReport":
        rows = []
        for rec in csv.DictReader(io.StringIO(text)):
            vals = [float(rec[c]) if rec[c].strip() else None for c in CSV_COLUMNS[1:]]
            rows.append(ReportRow(int(rec["week"]), *vals))
        rows.sort(key=lambda r: r.week)
        horizon = max((r.week for r in rows if r.apte is not None), default=0)
        return cls(tuple(rows), horizon)


def _round3(v: Optional[float]) -> str:
    if v is None:
        return ""
    r = round(float(v), 3)
    return repr(r + 0.0 if r != 0 else 0.0)


def _contrast(e1: float, e0: float, kind: str) -> float:
    if kind == "difference":
        return e1 - e0
    if kind == "ratio":
        if e0 == 0:
            raise EstimationError("ratio contrast with zero control mean")
        return e1 / e0
    raise DataError(f"unknown contrast {kind!r}")


def apte_trajectory(
    estimates: Iterable[PoEstimate],
    contrast: str = "difference",
    csc_stationarity: Optional[dict] = None,
    config: Optional[dict] = None,
) -> ApteReport:
    """Assemble per-week mean POs and their contrasts.

    The horizon is the last week at which both levels are estimable; contrasts
    are reported only up to it.
    """
    by_key = {(e.week, e.level): e for e in estimates}
    weeks = sorted({w for w, _ in by_key})
    both = [
        w
        for w in weeks
        if all((w, a) in by_key and by_key[(w, a)].estimable for a in (0, 1))
    ]
    if not both:
        raise EstimationError("no estimable horizon")
    horizon = max(both)
    last = max(w for w in weeks if any(by_key.get((w, a)) and by_key[(w, a)].estimable for a in (0, 1)))
    rows = []
    for w in range(1, last + 1):
        e = {a: by_key.get((w, a)) for a in (0, 1)}
        mean = {a: e[a].mean_po if e[a] is not None and e[a].estimable else None for a in (0, 1)}
        naive = {a: e[a].naive_mean_po if e[a] is not None and e[a].estimable else None for a in (0, 1)}
        apte = apte_naive = None
        if w <= horizon and mean[1] is not None and mean[0] is not None:
            apte = _contrast(mean[1], mean[0], contrast)
            if naive[1] is not None and naive[0] is not None:
                apte_naive = _contrast(naive[1], naive[0], contrast)
        rows.append(ReportRow(w, mean[1], mean[0], apte, naive[1], naive[0], apte_naive))
    return ApteReport(tuple(rows), horizon, contrast, csc_stationarity, dict(config or {}))


def estimate_apte(
    forest: Forest,
    design: DesignMatrix,
    plan: PeriodPlan,
    roles: Optional[CausalRoleMap] = None,
    contrast: str = "difference",
) -> tuple[ApteReport, np.ndarray]:
    """PPOs for every design row, then the g-formula and naive trajectories."""
    ppos = predict_pos(forest, design, roles)
    max_week = int(design.week.max()) if len(design) else 0
    estimates = [gformula_mean_po(ppos, design, plan, j, a) for j in range(1, max_week + 1) for a in (0, 1)]
    report = apte_trajectory(estimates, contrast)
    obs = tuple(
        Observation(int(p), int(t), int(w), int(a), float(y), float(q[1]), float(q[0]))
        for p, t, w, a, y, q in zip(design.position, design.period, design.week, design.treatment, design.y, ppos)
    )
    return ApteReport(report.rows, report.horizon, contrast, observations=obs), ppos
