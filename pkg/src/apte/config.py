"""Run configuration and its flat ``key = value`` text form."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from apte.errors import DataError
from apte.forest import ForestParams

_SECTION = "run"
# Settings that never change results and so stay out of the fingerprint.
_VOLATILE = ("out_dir", "n_jobs")


@dataclass(frozen=True)
class RunConfig:
    input: str = ""
    out_dir: str = "apte-out"
    start_day: str = "monday"
    date_column: str = "date"
    weight_column: str = "weight"
    activity_column: str = "activity"
    lags_y: int = 12
    lags_x: int = 12
    quantiles: tuple[float, ...] = (0.25, 0.5, 0.75)
    top_k: int = 9
    n_trees: int = 500
    mtry: Optional[int] = None
    min_node_size: int = 5
    min_period: int = 1
    restrict_stationary: bool = True
    outcome_penalty: Optional[float] = None
    exposure_penalty: Optional[float] = None
    contrast: str = "difference"
    seed: int = 0
    n_jobs: int = 1

    def forest_params(self, seed: Optional[int] = None) -> ForestParams:
        return ForestParams(
            n_trees=self.n_trees,
            mtry=self.mtry,
            min_node_size=self.min_node_size,
            seed=self.seed if seed is None else seed,
            n_jobs=self.n_jobs,
        )

    def fingerprint(self) -> dict:
        return {f.name: _jsonable(getattr(self, f.name)) for f in fields(self) if f.name not in _VOLATILE}

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        try:
            parser.read_string(f"[{_SECTION}]\n" + text)
        except configparser.Error as exc:
            raise DataError(f"bad config file: {exc}") from exc
        return cls.from_mapping(dict(parser[_SECTION]))

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        kinds = {f.name: f for f in fields(cls)}
        parsed = {}
        for key, raw in values.items():
            if key not in kinds:
                raise DataError(f"unknown config key {key!r}")
            parsed[key] = _parse(key, raw, getattr(cls(), key))
        return cls(**parsed)

    def updated(self, **changes) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(repr(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(key: str, raw, default):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if text.lower() == "none":
            return None
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if isinstance(default, tuple):
            return tuple(float(x) for x in text.split(",") if x.strip())
        if key in ("mtry",):
            return int(text)
        if key in ("outcome_penalty", "exposure_penalty"):
            return float(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError as exc:
        raise DataError(f"bad value for {key}: {raw!r}") from exc
