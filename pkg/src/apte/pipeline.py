"""End-to-end analysis: daily CSV in, report and figures out."""

from __future__ import annotations

import contextlib
import hashlib
import io
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from apte import changepoint, plots
from apte.config import RunConfig
from apte.design import (
    CausalRoleMap,
    DesignMatrix,
    PeriodPlan,
    ThresholdSelection,
    build_design_matrix,
    build_periods,
    candidate_thresholds,
    select_predictors,
    select_threshold,
    write_periods_csv,
)
from apte.errors import ApteError, DataError, EstimationError
from apte.estimator import ApteReport, estimate_apte
from apte.forest import Forest, ForestParams, ImportanceTable, fit_forest, oob_mse, permutation_importance
from apte.series import ColumnSchema, WeeklySeries, ingest_daily, interpolate_missing, to_weekly, write_weekly_csv
from apte.stationarity import CscStationaritySummary, csc_stationarity

logger = logging.getLogger(__name__)

ARTIFACTS = (
    "report.csv",
    "report.json",
    "timeseries.svg",
    "pancit.svg",
    "apte.svg",
    "periods.csv",
    "weekly.csv",
    "forest.json",
    "run.log",
)

CENTERING_NOTE = "outcomes centered once on the mean of all ingested daily weights, not re-centered on the analyzed window"


class StageError(ApteError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause

    @property
    def exit_code(self) -> int:
        return 3 if isinstance(self.cause, EstimationError) else 2


@contextlib.contextmanager
def stage(name: str):
    logger.info("stage %s", name)
    try:
        yield
    except StageError:
        raise
    except (ApteError, OSError) as exc:
        raise StageError(name, exc) from exc


def derive_seed(master: int, step: int) -> int:
    return int(np.random.SeedSequence([master, step]).generate_state(1, dtype=np.uint64)[0])


@dataclass
class Estimation:
    report: ApteReport
    forest: Forest
    design: DesignMatrix
    full_design: DesignMatrix
    importances: Optional[ImportanceTable]
    selected: list[str]
    roles: CausalRoleMap
    ppos: np.ndarray
    oob_mse_full: Optional[float] = None
    oob_mse_reduced: Optional[float] = None


def estimate_from_plan(
    series: WeeklySeries,
    plan: PeriodPlan,
    lags_y: int,
    lags_x: int,
    params: ForestParams,
    top_k: Optional[int] = None,
    contrast: str = "difference",
) -> Estimation:
    """Design matrix, forest, optional importance-based reduction, then PO/APTE.

    With ``top_k`` set, a first forest on every feature ranks predictors by
    permutation importance and the model is refit on the top ``top_k`` plus
    treatment (with a seed derived from ``params.seed``).
    """
    full = build_design_matrix(series, plan, lags_y, lags_x)
    max_week = int(full.week.max())
    p = len(full.feature_names)
    forest = fit_forest(full.X, full.y, params, full.feature_names)
    mse_full = oob_mse(forest, full.y)
    importances = None
    selected = list(full.feature_names)
    design = full
    if top_k is not None and top_k < p - 1:
        importances = permutation_importance(forest, full.X, full.y)
        selected, roles = select_predictors(importances, top_k, max_week)
        design = full.subset(selected)
        refit = ForestParams(params.n_trees, params.mtry, params.min_node_size, derive_seed(params.seed, 1), params.n_jobs)
        if refit.mtry is not None:
            refit = ForestParams(refit.n_trees, min(refit.mtry, len(selected)), refit.min_node_size, refit.seed, refit.n_jobs)
        forest = fit_forest(design.X, design.y, refit, design.feature_names)
    else:
        if top_k is not None:
            logger.info("top_k=%d keeps every one of %d features; no reduction", top_k, p)
        roles = CausalRoleMap(tuple(f for f in selected if f != "treatment"), max_week)
    report, ppos = estimate_apte(forest, design, plan, roles, contrast)
    return Estimation(report, forest, design, full, importances, selected, roles, ppos, mse_full, oob_mse(forest, design.y))


def csc_audit(design: DesignMatrix, roles: CausalRoleMap, weeks: Sequence[int]) -> Optional[CscStationaritySummary]:
    """Unit-root flags for every CSC at every week.

    Each CSC is tested on its within-week stratum when that has at least ten
    rows, otherwise on the pooled column.
    """
    panel, sources = {}, {}
    for j in weeks:
        mask = design.week == j
        for f in roles.csc_features(j):
            col = design.column(f)
            if mask.sum() >= 10:
                panel[(j, f)], sources[(j, f)] = col[mask], "stratum"
            else:
                panel[(j, f)], sources[(j, f)] = col, "pooled"
    if not panel:
        return None
    try:
        return csc_stationarity(panel, sources)
    except ApteError as exc:
        logger.warning("CSC stationarity not computable: %s", exc)
        return None


@dataclass
class AnalysisResult:
    config: RunConfig
    series: WeeklySeries
    window: WeeklySeries
    outcome_segmentation: Optional[changepoint.Segmentation]
    exposure_segmentation: changepoint.Segmentation
    plan: PeriodPlan
    selection: ThresholdSelection
    estimation: Estimation
    stationarity: Optional[CscStationaritySummary]
    report: ApteReport
    input_sha256: str
    log: list[str] = field(default_factory=list)


def analyze(config: RunConfig, data: Optional[bytes] = None) -> AnalysisResult:
    """Run every analysis stage in memory; nothing is written."""
    log: list[str] = []

    def note(msg: str, *args) -> None:
        text = msg % args if args else msg
        log.append(text)
        logger.info(text)

    with stage("ingest"):
        if data is None:
            path = Path(config.input)
            if not path.is_file():
                raise DataError(f"input file not found: {config.input}")
            data = path.read_bytes()
        digest = hashlib.sha256(data).hexdigest()
        schema = ColumnSchema(config.date_column, config.weight_column, config.activity_column)
        records = ingest_daily(data, schema)
        note("ingested %d daily records", len(records))
    with stage("weekly"):
        weekly = to_weekly(records, config.start_day)
        note("aggregated to %d weeks; center %.6f kg", len(weekly), weekly.center)
    with stage("interpolate"):
        series = interpolate_missing(weekly)
        n_imp = sum(p.imputed_outcome or p.imputed_exposure for p in series.points)
        note(
            "trimmed %d leading / %d trailing weeks; imputed %d weeks",
            series.trimmed_leading,
            series.trimmed_trailing,
            n_imp,
        )
    with stage("outcome-stationarity"):
        out_seg = None
        window = series
        if config.restrict_stationary:
            out_seg = changepoint.detect_pelt(series.outcomes, config.outcome_penalty)
            lo, hi = changepoint.longest_segment(out_seg)
            window = series.window(lo, hi)
            note(
                "outcome changepoints %s; analyzing weeks %d-%d (%d weeks)",
                list(out_seg.changepoints),
                window.points[0].week_index,
                window.points[-1].week_index,
                len(window),
            )
    with stage("exposure-segmentation"):
        exp_seg = changepoint.detect_pelt(window.exposures, config.exposure_penalty)
        plan = build_periods(window.exposures, exp_seg, config.min_period)
        note("%d exposure segments -> %d periods", len(exp_seg.changepoints), len(plan.periods))
    with stage("threshold"):
        candidates = candidate_thresholds(plan, config.quantiles)
        selection = select_threshold(
            candidates, window, plan, config.lags_y, config.lags_x, config.forest_params(derive_seed(config.seed, 1))
        )
        plan = plan.labeled(selection.threshold)
        note("threshold candidates %s, OOB MSE %s -> %r", selection.candidates, selection.oob_mse, selection.threshold)
    with stage("estimation"):
        est = estimate_from_plan(
            window,
            plan,
            config.lags_y,
            config.lags_x,
            config.forest_params(derive_seed(config.seed, 2)),
            config.top_k,
            config.contrast,
        )
        note("selected predictors %s; reduced OOB MSE %r", est.selected, est.oob_mse_reduced)
        note("APTE horizon %d weeks", est.report.horizon)
    with stage("csc-stationarity"):
        weeks = [r.week for r in est.report.rows]
        summary = csc_audit(est.design, est.roles, weeks)
        note("overall CSC stationarity %s", "n/a" if summary is None else repr(summary.overall))

    fp = config.fingerprint()
    fp["input_sha256"] = digest
    extras = {
        "center": weekly.center,
        "centering": CENTERING_NOTE,
        "trimmed_leading": series.trimmed_leading,
        "trimmed_trailing": series.trimmed_trailing,
        "analyzed_weeks": [window.points[0].week_index, window.points[-1].week_index],
        "outcome_segmentation": None if out_seg is None else out_seg.to_dict(),
        "exposure_segmentation": exp_seg.to_dict(),
        "periods": {"lengths": plan.lengths, "labels": list(plan.treatment_labels)},
        "threshold_selection": selection.to_dict(),
        "importances": None if est.importances is None else est.importances.as_dict(),
        "selected_predictors": est.selected,
        "roles": est.roles.table(),
        "oob_mse_full": est.oob_mse_full,
        "oob_mse_reduced": est.oob_mse_reduced,
        "forest_defaults_assumed": {
            "n_trees": config.n_trees,
            "mtry": config.mtry if config.mtry is not None else "max(floor(p/3), 1)",
            "min_node_size": config.min_node_size,
        },
    }
    r = est.report
    report = ApteReport(
        r.rows, r.horizon, r.contrast, None if summary is None else summary.to_dict(), fp, r.observations, extras
    )
    return AnalysisResult(
        config, series, window, out_seg, exp_seg, plan, selection, est, summary, report, digest, log
    )


def render_artifacts(result: AnalysisResult) -> dict[str, bytes]:
    report = result.report
    periods = io.StringIO()
    write_periods_csv(result.plan, periods, week_offset=result.window.points[0].week_index)
    weekly = io.StringIO()
    write_weekly_csv(result.series, weekly)
    return {
        "report.csv": report.to_csv().encode(),
        "report.json": report.to_json().encode(),
        "timeseries.svg": plots.render_timeseries(report).encode(),
        "pancit.svg": plots.render_pancit(report).encode(),
        "apte.svg": plots.render_apte(report).encode(),
        "periods.csv": periods.getvalue().encode(),
        "weekly.csv": weekly.getvalue().encode(),
        "forest.json": result.estimation.forest.to_json().encode(),
        "run.log": ("\n".join(result.log) + "\n").encode(),
    }


def write_atomic(out_dir: Path, files: dict[str, bytes]) -> None:
    """Write each file via temp-and-rename; on failure remove what was written."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    tmp = None
    try:
        for name, content in files.items():
            fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.")
            with os.fdopen(fd, "wb") as fh:
                fh.write(content)
            os.replace(tmp, out_dir / name)
            tmp = None
            written.append(out_dir / name)
    except OSError:
        for path in written + ([Path(tmp)] if tmp else []):
            path.unlink(missing_ok=True)
        raise


def run_analyze(config: RunConfig) -> AnalysisResult:
    result = analyze(config)
    with stage("artifacts"):
        files = render_artifacts(result)
        write_atomic(Path(config.out_dir), files)
    return result
