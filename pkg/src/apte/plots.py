"""Deterministic standalone SVG plots: time series, pancit and APTE.

Every plotted series is a ``<polyline>`` carrying ``data-series`` and
``data-values`` attributes with the exact values drawn, so figures can be
audited against the report they came from.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from apte.errors import DataError
from apte.estimator import ApteReport, Observation

HIGH_DOT = "#111111"
LOW_DOT = "#9a9a9a"
HIGH_PPO = "#1b9e9e"
LOW_PPO = "#f08a6c"
HIGH_MEAN = "#0b5e5e"
LOW_MEAN = "#b5472a"


@dataclass(frozen=True)
class PlotSpec:
    kind: str
    width: int = 720
    height: int = 420
    margin_left: int = 70
    margin_right: int = 20
    margin_top: int = 40
    margin_bottom: int = 50
    title: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("timeseries", "pancit", "apte"):
            raise DataError(f"unknown plot kind {self.kind!r}")


def _num(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(target - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 10) + 0.0)
        v += step
    return ticks


class _Canvas:
    def __init__(self, spec: PlotSpec, xlim: tuple[float, float], ylim: tuple[float, float]):
        self.spec = spec
        x0, x1 = xlim
        y0, y1 = ylim
        if x1 <= x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 <= y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        pad = 0.05 * (y1 - y0)
        self.xlim = (x0, x1)
        self.ylim = (y0 - pad, y1 + pad)
        self.parts: list[str] = []

    def x(self, v: float) -> float:
        s = self.spec
        x0, x1 = self.xlim
        return s.margin_left + (v - x0) / (x1 - x0) * (s.width - s.margin_left - s.margin_right)

    def y(self, v: float) -> float:
        s = self.spec
        y0, y1 = self.ylim
        return s.height - s.margin_bottom - (v - y0) / (y1 - y0) * (s.height - s.margin_top - s.margin_bottom)

    def add(self, element: str) -> None:
        self.parts.append(element)

    def polyline(self, xs, ys, series: str, stroke: str, width: float, opacity: float = 1.0) -> None:
        pts = " ".join(f"{_num(self.x(a))},{_num(self.y(b))}" for a, b in zip(xs, ys))
        values = " ".join(repr(float(b)) for b in ys)
        self.add(
            f'<polyline data-series="{series}" data-values="{values}" points="{pts}" fill="none" '
            f'stroke="{stroke}" stroke-width="{width}" stroke-opacity="{opacity}" '
            'stroke-linejoin="round" stroke-linecap="round"/>'
        )

    def dot(self, xv: float, yv: float, fill: str, series: str) -> None:
        self.add(f'<circle data-series="{series}" cx="{_num(self.x(xv))}" cy="{_num(self.y(yv))}" r="3" fill="{fill}"/>')

    def hline(self, yv: float, series: str) -> None:
        s = self.spec
        yy = _num(self.y(yv))
        self.add(
            f'<line data-series="{series}" x1="{s.margin_left}" y1="{yy}" x2="{s.width - s.margin_right}" '
            f'y2="{yy}" stroke="#555555" stroke-width="1" stroke-dasharray="4 3"/>'
        )

    def vline(self, xv: float) -> None:
        s = self.spec
        xx = _num(self.x(xv))
        self.add(
            f'<line data-series="period-boundary" x1="{xx}" y1="{s.margin_top}" x2="{xx}" '
            f'y2="{s.height - s.margin_bottom}" stroke="#cccccc" stroke-width="1"/>'
        )

    def render(self, xlabel: str, ylabel: str, title: str, integer_x: bool = True) -> str:
        s = self.spec
        axes = []
        bottom = s.height - s.margin_bottom
        axes.append(
            f'<rect x="{s.margin_left}" y="{s.margin_top}" width="{s.width - s.margin_left - s.margin_right}" '
            f'height="{s.height - s.margin_top - s.margin_bottom}" fill="none" stroke="#333333" stroke-width="1"/>'
        )
        xt = _nice_ticks(*self.xlim)
        if integer_x:
            xt = [t for t in xt if float(t).is_integer()]
        for t in xt:
            xx = _num(self.x(t))
            label = str(int(t)) if integer_x else _num(t)
            axes.append(f'<line x1="{xx}" y1="{bottom}" x2="{xx}" y2="{bottom + 5}" stroke="#333333"/>')
            axes.append(f'<text x="{xx}" y="{bottom + 18}" text-anchor="middle">{label}</text>')
        for t in _nice_ticks(*self.ylim):
            yy = _num(self.y(t))
            axes.append(f'<line x1="{s.margin_left - 5}" y1="{yy}" x2="{s.margin_left}" y2="{yy}" stroke="#333333"/>')
            axes.append(f'<text x="{s.margin_left - 8}" y="{yy}" text-anchor="end" dominant-baseline="middle">{_num(t)}</text>')
        axes.append(f'<text x="{s.width / 2:.1f}" y="{s.height - 10}" text-anchor="middle">{xlabel}</text>')
        axes.append(
            f'<text x="16" y="{s.height / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {s.height / 2:.1f})">{ylabel}</text>'
        )
        axes.append(f'<text x="{s.width / 2:.1f}" y="22" text-anchor="middle" font-size="15">{s.title or title}</text>')
        body = "\n".join(axes + self.parts)
        return (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{s.width}" height="{s.height}" '
            f'viewBox="0 0 {s.width} {s.height}" font-family="sans-serif" font-size="12">\n'
            f'<rect width="{s.width}" height="{s.height}" fill="#ffffff"/>\n{body}\n</svg>\n'
        )


def _limits(values: Iterable[Optional[float]]) -> tuple[float, float]:
    vs = [v for v in values if v is not None]
    if not vs:
        return (-1.0, 1.0)
    return (min(vs), max(vs))


def _segments(weeks: Sequence[int], values: Sequence[Optional[float]]):
    """Contiguous runs of present values, as (weeks, values) pairs."""
    run_w, run_v = [], []
    for w, v in zip(weeks, values):
        if v is None:
            if run_w:
                yield run_w, run_v
            run_w, run_v = [], []
        else:
            run_w.append(w)
            run_v.append(v)
    if run_w:
        yield run_w, run_v


def render_apte(report: ApteReport, spec: Optional[PlotSpec] = None) -> str:
    """APTE trajectory: correct estimate dark and bold, naive light and wide."""
    spec = spec or PlotSpec("apte")
    rows = [r for r in report.rows if r.apte is not None]
    if not rows:
        raise DataError("report has no estimable APTE")
    weeks = [r.week for r in rows]
    apte = [r.apte for r in rows]
    naive = [r.apte_naive for r in rows]
    lo, hi = _limits(apte + naive + [0.0])
    c = _Canvas(spec, (min(weeks), max(weeks)), (lo, hi))
    c.hline(0.0, "zero")
    if any(v is not None for v in naive):
        for ws, vs in _segments(weeks, naive):
            c.polyline(ws, vs, "apte-naive", "#9a9a9a", 6, 0.6)
    c.polyline(weeks, apte, "apte", "#111111", 2.5)
    return c.render("Week in period", "APTE", "Average period treatment effect")


def render_pancit(report: ApteReport, observations: Optional[Sequence[Observation]] = None, spec=None) -> str:
    """Per-period trajectories against week-in-period.

    Observed outcomes are dots colored by treatment level; each period's
    predicted potential outcomes are thin lines; estimated mean POs are bold
    lines and the naive means wider, lighter lines.
    """
    spec = spec or PlotSpec("pancit")
    obs = list(report.observations if observations is None else observations)
    if not report.rows or all(r.e1 is None and r.e0 is None for r in report.rows):
        raise DataError("report has no estimable week")
    weeks = [r.week for r in report.rows]
    means = {
        "mean-po-1": [r.e1 for r in report.rows],
        "mean-po-0": [r.e0 for r in report.rows],
        "naive-po-1": [r.e1_naive for r in report.rows],
        "naive-po-0": [r.e0_naive for r in report.rows],
    }
    all_vals = [o.outcome for o in obs] + [o.ppo1 for o in obs] + [o.ppo0 for o in obs]
    for vs in means.values():
        all_vals += vs
    lo, hi = _limits(all_vals)
    max_week = max(weeks + [o.week for o in obs])
    c = _Canvas(spec, (1, max_week), (lo, hi))

    by_period = defaultdict(list)
    for o in obs:
        by_period[o.period].append(o)
    for t in sorted(by_period):
        pts = sorted(by_period[t], key=lambda o: o.week)
        ws = [o.week for o in pts]
        if len(pts) > 1:
            c.polyline(ws, [o.ppo1 for o in pts], f"ppo-1-period-{t}", HIGH_PPO, 0.8, 0.5)
            c.polyline(ws, [o.ppo0 for o in pts], f"ppo-0-period-{t}", LOW_PPO, 0.8, 0.5)
    for o in obs:
        c.dot(o.week, o.outcome, HIGH_DOT if o.treatment == 1 else LOW_DOT, f"observed-{o.treatment}")

    for key, color in (("naive-po-1", HIGH_PPO), ("naive-po-0", LOW_PPO)):
        for ws, vs in _segments(weeks, means[key]):
            c.polyline(ws, vs, key, color, 7, 0.45)
    for key, color in (("mean-po-1", HIGH_MEAN), ("mean-po-0", LOW_MEAN)):
        for ws, vs in _segments(weeks, means[key]):
            c.polyline(ws, vs, key, color, 3)
    return c.render("Week in period", "Outcome", "Pancit plot")


def render_timeseries(report: ApteReport, spec: Optional[PlotSpec] = None) -> str:
    """Observed outcomes over the analyzed weeks with PPOs under the observed level."""
    spec = spec or PlotSpec("timeseries")
    obs = sorted(report.observations, key=lambda o: o.position)
    if not obs:
        raise DataError("report carries no observations")
    pos = [o.position + 1 for o in obs]
    fitted = [o.ppo1 if o.treatment == 1 else o.ppo0 for o in obs]
    lo, hi = _limits([o.outcome for o in obs] + fitted)
    c = _Canvas(spec, (pos[0], pos[-1]), (lo, hi))
    for prev, cur in zip(obs, obs[1:]):
        if cur.period != prev.period:
            c.vline(cur.position + 0.5)
    by_period = defaultdict(list)
    for o, f in zip(obs, fitted):
        by_period[o.period].append((o.position + 1, f))
    for t in sorted(by_period):
        xs, ys = zip(*by_period[t])
        c.polyline(xs, ys, f"ppo-period-{t}", "#4a6fa5", 1.2)
    for o in obs:
        c.dot(o.position + 1, o.outcome, HIGH_DOT if o.treatment == 1 else LOW_DOT, f"observed-{o.treatment}")
    return c.render("Week", "Outcome", "Observed outcomes and predicted potential outcomes")
