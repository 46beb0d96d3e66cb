"""Synthetic single-subject datasets with known potential outcomes.

Weekly outcomes follow

    Y_w = baseline + sum_k ar[k] * (Y_{w-k} - baseline)
          + sum_l carryover[l] * X_{t-l} + a * effect(history, j) + noise_w

where ``a`` is the treatment of the current period ``t``, ``j`` the week within
the period and ``history = (X_{t-1}, X_{t-2})``. Both potential paths of a
period start from the same pre-period state and share the same noise draws,
so the observed outcome always equals the potential outcome of the treatment
actually received.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import IO, Optional, Sequence

import numpy as np

from apte.design import PeriodPlan, plan_from_lengths
from apte.errors import DataError
from apte.series import WeeklySeries, from_arrays

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    n_periods: int = 200
    period_lengths: tuple[int, ...] = (2, 3, 4, 5, 6, 7, 8)  # drawn uniformly
    baseline: float = 0.0
    ar: tuple[float, ...] = ()
    carryover: tuple[float, ...] = ()  # additive effect of X_{t-1}, X_{t-2}, ...
    # (pattern over "X_{t-1}X_{t-2}" with "*" wildcards, per-week effect of a=1);
    # first matching pattern wins, the last profile value repeats past its end
    effect: tuple[tuple[str, tuple[float, ...]], ...] = ()
    confounding: float = 0.0  # logistic slope on the last pre-period outcome
    randomized: bool = False
    noise_sd: float = 1.0
    exposure_levels: tuple[float, float] = (0.1, 0.9)
    seed: int = 0

    def __post_init__(self):
        if self.noise_sd < 0:
            raise DataError("noise_sd must be non-negative")
        if self.n_periods < 1 or not self.period_lengths or min(self.period_lengths) < 1:
            raise DataError("need at least one period and positive period lengths")
        if self.ar:
            p = len(self.ar)
            companion = np.zeros((p, p))
            companion[0] = self.ar
            companion[1:, :-1] = np.eye(p - 1)
            if np.max(np.abs(np.linalg.eigvals(companion))) >= 1.0:
                raise DataError(f"AR coefficients {self.ar} are not stable")
        for pattern, profile in self.effect:
            if len(pattern) != 2 or set(pattern) - set("01*") or not profile:
                raise DataError(f"bad effect kernel entry {pattern!r}: {profile!r}")
        lo, hi = self.exposure_levels
        if not 0 <= lo <= 1 or not 0 <= hi <= 1:
            raise DataError("exposure levels must lie in [0, 1]")

    def effect_at(self, prev1: int, prev2: int, week: int) -> float:
        key = f"{prev1}{prev2}"
        for pattern, profile in self.effect:
            if all(p in ("*", k) for p, k in zip(pattern, key)):
                return float(profile[min(week, len(profile)) - 1])
        return 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["effect"] = [[p, list(v)] for p, v in self.effect]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        for key in ("period_lengths", "ar", "carryover", "exposure_levels"):
            if key in d:
                d[key] = tuple(d[key])
        if "effect" in d:
            d["effect"] = tuple((p, tuple(v)) for p, v in d["effect"])
        return cls(**d)


class _State:
    """Outcome deviations and treatment history carried between periods."""

    __slots__ = ("y", "x")

    def __init__(self, config: SimConfig):
        self.y = [0.0] * max(len(config.ar), 1)  # most recent first
        self.x = [0] * max(len(config.carryover), 2)

    def copy(self) -> "_State":
        s = _State.__new__(_State)
        s.y, s.x = list(self.y), list(self.x)
        return s


def _period_path(config: SimConfig, state: _State, a: int, eps: np.ndarray) -> list[float]:
    """Outcome deviations for one period under treatment ``a``."""
    ar, co = config.ar, config.carryover
    y = list(state.y)
    shift = sum(c * state.x[l] for l, c in enumerate(co))
    out = []
    for j, e in enumerate(eps, start=1):
        mean = shift + sum(phi * y[k] for k, phi in enumerate(ar))
        if a:
            mean += config.effect_at(state.x[0], state.x[1], j)
        v = mean + float(e)
        out.append(v)
        y.insert(0, v)
        y.pop()
    return out


def _advance(state: _State, path: Sequence[float], a: int) -> None:
    for v in path:
        state.y.insert(0, v)
        state.y.pop()
    state.x.insert(0, a)
    state.x.pop()


def _assign(config: SimConfig, state: _State, rng: np.random.Generator) -> int:
    u = rng.random()
    if config.randomized:
        return int(u < 0.5)
    z = config.confounding * state.y[0]
    return int(u < 1.0 / (1.0 + math.exp(-z)))


@dataclass(frozen=True)
class SimResult:
    series: WeeklySeries
    plan: PeriodPlan
    outcome: np.ndarray  # observed, on the baseline scale
    po1: np.ndarray
    po0: np.ndarray
    exposure_counts: np.ndarray  # active days out of 7 per week
    config: SimConfig

    def truth_log(self) -> dict:
        period, week, treat = self.plan.weekly_arrays()
        return {
            "config": self.config.to_dict(),
            "weeks": [
                {
                    "week_index": i + 1,
                    "period": int(period[i]),
                    "week_in_period": int(week[i]),
                    "treatment": int(treat[i]),
                    "outcome": float(self.outcome[i]),
                    "po1": float(self.po1[i]),
                    "po0": float(self.po0[i]),
                }
                for i in range(len(self.outcome))
            ],
        }


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def simulate_series(config: SimConfig) -> SimResult:
    """Draw one observational (or randomized) dataset plus its hidden truth."""
    rng = _rng(config.seed, 0)
    state = _State(config)
    lengths, labels, y_obs, y1, y0, counts = [], [], [], [], [], []
    for _ in range(config.n_periods):
        m = int(rng.choice(config.period_lengths))
        a = _assign(config, state, rng)
        eps = rng.normal(0.0, 1.0, size=m) * config.noise_sd
        paths = {lvl: _period_path(config, state, lvl, eps) for lvl in (0, 1)}
        level = config.exposure_levels[a]
        counts.extend(int(c) for c in rng.binomial(7, level, size=m))
        y1.extend(paths[1])
        y0.extend(paths[0])
        y_obs.extend(paths[a])
        _advance(state, paths[a], a)
        lengths.append(m)
        labels.append(a)
    b = config.baseline
    outcome = np.array(y_obs) + b
    exposure = np.array(counts) / 7.0
    series = from_arrays(outcome, exposure)
    plan = plan_from_lengths(lengths, exposure, labels)
    return SimResult(series, plan, outcome, np.array(y1) + b, np.array(y0) + b, np.array(counts), config)


@dataclass(frozen=True)
class TruthTrajectory:
    weeks: tuple[int, ...]
    e1: tuple[float, ...]
    e0: tuple[float, ...]
    apte: tuple[float, ...]
    se1: tuple[float, ...]
    se0: tuple[float, ...]
    se_apte: tuple[float, ...]
    n_reps: int

    def to_dict(self) -> dict:
        return asdict(self)


def oracle_apte(
    config: SimConfig, horizon: int, n_reps: int = 1000, burn_in: int = 20, n_jobs: int = 1
) -> TruthTrajectory:
    """Forced-randomization Monte Carlo truth for each within-period week.

    Each replication runs ``burn_in`` periods under the natural assignment
    mechanism, then forces the next period to each level in turn (same
    history, same noise) and records its outcomes.
    """
    if n_reps < 100:
        raise DataError("oracle needs n_reps >= 100")
    support = max(config.period_lengths)
    if horizon > support:
        logger.warning("horizon %d exceeds the longest period (%d); truncated", horizon, support)
        horizon = support
    if horizon < 1:
        raise DataError("horizon must be positive")

    def rep(r: int) -> np.ndarray:
        rng = _rng(config.seed, 1, r)
        state = _State(config)
        for _ in range(burn_in):
            m = int(rng.choice(config.period_lengths))
            a = _assign(config, state, rng)
            eps = rng.normal(0.0, 1.0, size=m) * config.noise_sd
            _advance(state, _period_path(config, state, a, eps), a)
        eps = rng.normal(0.0, 1.0, size=horizon) * config.noise_sd
        return np.array([_period_path(config, state, a, eps) for a in (0, 1)])

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            draws = np.stack(list(pool.map(rep, range(n_reps))))
    else:
        draws = np.stack([rep(r) for r in range(n_reps)])
    draws += config.baseline
    y0, y1 = draws[:, 0, :], draws[:, 1, :]
    diff = y1 - y0
    root = math.sqrt(n_reps)

    def se(v: np.ndarray) -> tuple[float, ...]:
        return tuple(float(s) for s in v.std(axis=0, ddof=1) / root)

    return TruthTrajectory(
        tuple(range(1, horizon + 1)),
        tuple(float(v) for v in y1.mean(axis=0)),
        tuple(float(v) for v in y0.mean(axis=0)),
        tuple(float(v) for v in diff.mean(axis=0)),
        se(y1),
        se(y0),
        se(diff),
        n_reps,
    )


_BASE = SimConfig()


def scenario_library() -> dict[str, SimConfig]:
    """Named scenarios used by the acceptance suite and the ``simulate`` command."""
    return {
        "null": replace(_BASE, ar=(0.5,)),
        "confounded-null": replace(_BASE, ar=(0.7,), confounding=2.0),
        "additive-effect": replace(_BASE, ar=(0.5,), effect=(("**", (-0.3,)),)),
        "slow-decay": replace(
            _BASE, period_lengths=(3,), baseline=1.0, effect=(("**", (5.0, 2.0, 1.0)),)
        ),
        "slow-onset": replace(
            _BASE, period_lengths=(5,), baseline=1.0, effect=(("**", (1.0, 2.0, 3.0, 4.0, 5.0)),)
        ),
        "carryover": replace(
            _BASE, period_lengths=(3,), baseline=1.0, effect=(("0*", (5.0,)), ("1*", (1.0,)))
        ),
        "randomized-N1RT": replace(_BASE, randomized=True, confounding=2.0, effect=(("**", (-0.5,)),)),
    }


def write_daily_csv(
    result: SimResult,
    stream: IO[str],
    start: dt.date = dt.date(2012, 1, 2),
    base_weight: float = 80.0,
    daily_sd: float = 0.3,
    missing_rate: float = 0.0,
    seed: int = 0,
) -> None:
    """Expand weekly outcomes into daily weight/activity records.

    Daily jitter is demeaned within each week so the weekly mean weight is
    ``base_weight + outcome`` up to 6-decimal rounding. ``start`` should fall on the analysis
    week's start day. Missing cells are dropped uniformly at random.
    """
    rng = _rng(seed, 2)
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["date", "weight", "activity"])
    for w, (y, k) in enumerate(zip(result.outcome, result.exposure_counts)):
        jitter = rng.normal(0.0, daily_sd, size=7)
        jitter -= jitter.mean()
        active = np.zeros(7, dtype=bool)
        active[rng.permutation(7)[: int(k)]] = True
        drop = rng.random(7) < missing_rate
        for d in range(7):
            day = start + dt.timedelta(days=7 * w + d)
            if drop[d]:
                writer.writerow([day.isoformat(), "", ""])
            else:
                writer.writerow([day.isoformat(), f"{base_weight + y + jitter[d]:.6f}", int(active[d])])


def write_truth_json(result: SimResult, stream: IO[str], oracle: Optional[TruthTrajectory] = None) -> None:
    doc = result.truth_log()
    if oracle is not None:
        doc["oracle"] = oracle.to_dict()
    json.dump(doc, stream, indent=1, sort_keys=True)
