"""Command-line front end.

Exit codes: 0 success, 1 usage, 2 data error, 3 estimation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from apte import changepoint, plots, stationarity
from apte.config import RunConfig
from apte.design import write_periods_csv
from apte.errors import ApteError, DataError, EstimationError
from apte.estimator import ApteReport
from apte.pipeline import StageError, run_analyze, write_atomic
from apte.series import write_weekly_csv
from apte.simulate import oracle_apte, scenario_library, simulate_series, write_daily_csv, write_truth_json

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ESTIMATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _quantiles(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad quantile list {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="apte", description="Average period treatment effects for n-of-1 time series.")
    common = _Parser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log each stage to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", parents=[common], help="run the full pipeline on a daily CSV")
    a.add_argument("--input")
    a.add_argument("--config", help="flat key = value run configuration")
    a.add_argument("--seed", type=int)
    a.add_argument("--out-dir")
    a.add_argument("--start-day")
    a.add_argument("--lags-y", type=int)
    a.add_argument("--lags-x", type=int)
    a.add_argument("--quantiles", type=_quantiles)
    a.add_argument("--top-k", type=int)
    a.add_argument("--trees", type=int)
    a.add_argument("--mtry", type=int)
    a.add_argument("--min-period", type=int)
    a.add_argument("--threads", type=int)
    a.add_argument("--date-column")
    a.add_argument("--weight-column")
    a.add_argument("--activity-column")
    a.add_argument("--write-config", action="store_true", help="also write the resolved run.cfg")

    s = sub.add_parser("simulate", parents=[common], help="write a simulated dataset and its hidden truth")
    s.add_argument("--scenario", default="null", choices=sorted(scenario_library()))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--periods", type=int)
    s.add_argument("--missing-rate", type=float, default=0.0)
    s.add_argument("--oracle-reps", type=int, default=0, help="0 skips the oracle trajectory")
    s.add_argument("--horizon", type=int, default=6)
    s.add_argument("--out-dir", default="apte-sim")

    c = sub.add_parser("changepoint", parents=[common], help="segment one CSV column; prints JSON")
    c.add_argument("--input", required=True)
    c.add_argument("--column", required=True)
    c.add_argument("--method", choices=("pelt", "amoc"), default="pelt")
    c.add_argument("--penalty", type=float)

    t = sub.add_parser("stationarity", parents=[common], help="ADF and KPSS on one CSV column; prints JSON")
    t.add_argument("--input", required=True)
    t.add_argument("--column", required=True)

    r = sub.add_parser("report", parents=[common], help="re-render plots from a report JSON or CSV")
    r.add_argument("--input", required=True)
    r.add_argument("--out-dir", default=".")
    return p


def read_column(path: str, column: str) -> list[float]:
    file = Path(path)
    if not file.is_file():
        raise DataError(f"input file not found: {path}")
    reader = csv.DictReader(io.StringIO(file.read_text()))
    if reader.fieldnames is None or column not in reader.fieldnames:
        raise DataError(f"column {column!r} not in {path}")
    values = []
    for line, rec in enumerate(reader, start=2):
        cell = (rec[column] or "").strip()
        if not cell:
            continue
        try:
            values.append(float(cell))
        except ValueError:
            raise DataError(f"{path}:{line}: non-numeric {column} value {cell!r}") from None
    return values


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise DataError(f"config file not found: {args.config}")
        cfg = RunConfig.from_text(path.read_text())
    cfg = cfg.updated(
        input=args.input,
        seed=args.seed,
        out_dir=args.out_dir,
        start_day=args.start_day,
        lags_y=args.lags_y,
        lags_x=args.lags_x,
        quantiles=args.quantiles,
        top_k=args.top_k,
        n_trees=args.trees,
        mtry=args.mtry,
        min_period=args.min_period,
        n_jobs=args.threads,
        date_column=args.date_column,
        weight_column=args.weight_column,
        activity_column=args.activity_column,
    )
    if not cfg.input:
        raise UsageError("analyze: --input (or input in --config) is required")
    return cfg


def cmd_analyze(args) -> int:
    cfg = _resolve_config(args)
    result = run_analyze(cfg)
    if args.write_config:
        write_atomic(Path(cfg.out_dir), {"run.cfg": cfg.to_text().encode()})
    print(result.report.to_csv(), end="")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = scenario_library()[args.scenario]
    config = replace(config, seed=args.seed, n_periods=args.periods or config.n_periods)
    result = simulate_series(config)
    daily, weekly, periods, truth = io.StringIO(), io.StringIO(), io.StringIO(), io.StringIO()
    write_daily_csv(result, daily, missing_rate=args.missing_rate, seed=args.seed)
    write_weekly_csv(result.series, weekly)
    write_periods_csv(result.plan, periods)
    oracle = oracle_apte(config, args.horizon, n_reps=args.oracle_reps) if args.oracle_reps else None
    write_truth_json(result, truth, oracle)
    write_atomic(
        Path(args.out_dir),
        {
            "daily.csv": daily.getvalue().encode(),
            "weekly.csv": weekly.getvalue().encode(),
            "periods.csv": periods.getvalue().encode(),
            "truth.json": truth.getvalue().encode(),
        },
    )
    print(f"wrote {len(result.outcome)} weeks to {args.out_dir}")
    return EXIT_OK


def cmd_changepoint(args) -> int:
    values = read_column(args.input, args.column)
    detect = changepoint.detect_pelt if args.method == "pelt" else changepoint.detect_amoc
    print(json.dumps(detect(values, args.penalty).to_dict(), indent=1, sort_keys=True))
    return EXIT_OK


def cmd_stationarity(args) -> int:
    values = read_column(args.input, args.column)
    out = {"adf": stationarity.adf_test(values).to_dict(), "kpss": stationarity.kpss_test(values).to_dict()}
    print(json.dumps(out, indent=1, sort_keys=True))
    return EXIT_OK


def load_report(path: str) -> ApteReport:
    file = Path(path)
    if not file.is_file():
        raise DataError(f"input file not found: {path}")
    text = file.read_text()
    if text.lstrip().startswith("{"):
        try:
            return ApteReport.from_json(text)
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise DataError(f"malformed report JSON {path}: {exc}") from exc
    try:
        return ApteReport.from_csv(text)
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"malformed report CSV {path}: {exc}") from exc


def cmd_report(args) -> int:
    report = load_report(args.input)
    files = {"apte.svg": plots.render_apte(report).encode(), "pancit.svg": plots.render_pancit(report).encode()}
    if report.observations:
        files["timeseries.svg"] = plots.render_timeseries(report).encode()
    write_atomic(Path(args.out_dir), files)
    for name in sorted(files):
        print(Path(args.out_dir) / name)
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "changepoint": cmd_changepoint,
    "stationarity": cmd_stationarity,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"error in stage {exc}", file=sys.stderr)
        return exc.exit_code
    except EstimationError as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except (ApteError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
