"""Decile portfolios, monthly-rebalanced backtesting, and strategy comparison.

Conventions (the usual ones, since none are pinned elsewhere): the long-short
month return is mean(long leg) - mean(short leg), dollar-neutral with both
legs fully funded; annualization is geometric, (final cumulative)^(12/N) - 1;
Sharpe uses the sample (N-1) standard deviation, sqrt(12) scaling, and a zero
risk-free rate. No transaction costs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from .corpus import TokenIds, Vocabulary
from .deciles import Forecast, assign_deciles
from .errors import ConfigError, DataError

PORTFOLIO_KINDS = ("long_only", "long_short")
RANKING_SOURCES = ("model_forecast", "sentiment_score")


@dataclass(frozen=True)
class PortfolioSpec:
    kind: str
    ranking_source: str = "model_forecast"

    def validate(self) -> None:
        if self.kind not in PORTFOLIO_KINDS:
            raise ConfigError(f"portfolio kind must be one of {PORTFOLIO_KINDS}")
        if self.ranking_source not in RANKING_SOURCES:
            raise ConfigError(f"ranking source must be one of {RANKING_SOURCES}")


@dataclass(frozen=True)
class PortfolioSnapshot:
    """Equal-weighted constituents for one rebalance date."""
    date: date
    long: frozenset[str]
    short: frozenset[str]


@dataclass
class BacktestStats:
    dates: list[date]
    returns: list[float]
    curve: list[float]
    annualized_return: float
    sharpe: float | None   # None when volatility is zero
    n_months: int


def construct_portfolio(forecasts: list[Forecast], spec: PortfolioSpec) -> PortfolioSnapshot:
    """Top-decile long leg; long-short additionally shorts the bottom decile."""
    spec.validate()
    if not forecasts:
        raise DataError("no forecasts to rank")
    dates = {f.date for f in forecasts}
    if len(dates) != 1:
        raise DataError(f"one snapshot per date; got dates {sorted(dates)}")
    deciles = assign_deciles([(f.stock_id, f.predicted) for f in forecasts])
    long = frozenset(s for s, d in deciles.items() if d == 9)
    short = frozenset(s for s, d in deciles.items() if d == 0) \
        if spec.kind == "long_short" else frozenset()
    return PortfolioSnapshot(date=dates.pop(), long=long, short=short)


def backtest(forecasts: list[Forecast], spec: PortfolioSpec) -> BacktestStats:
    """Simulate monthly rebalancing over the forecasts' dates.

    The month return realizes each constituent's true forward return, equal
    weighted within each leg.
    """
    spec.validate()
    by_date: dict[date, list[Forecast]] = {}
    for f in forecasts:
        by_date.setdefault(f.date, []).append(f)
    if len(by_date) < 2:
        raise DataError(f"backtest needs at least 2 rebalance dates, got {len(by_date)}")

    dates = sorted(by_date)
    returns = []
    for d in dates:
        day = by_date[d]
        snapshot = construct_portfolio(day, spec)
        actual = {f.stock_id: f.actual for f in day}
        for sid in snapshot.long | snapshot.short:
            if sid not in actual or not math.isfinite(actual[sid]):
                raise DataError(f"missing actual return for {sid} at {d}")
        long_ret = float(np.mean([actual[s] for s in sorted(snapshot.long)]))
        if spec.kind == "long_short":
            short_ret = float(np.mean([actual[s] for s in sorted(snapshot.short)]))
            returns.append(long_ret - short_ret)
        else:
            returns.append(long_ret)

    curve = cumulative_curve(returns)
    try:
        sharpe = sharpe_ratio(returns)
    except ValueError:
        sharpe = None
    return BacktestStats(dates=dates, returns=returns, curve=curve,
                         annualized_return=annualized_return(returns),
                         sharpe=sharpe, n_months=len(returns))


def cumulative_curve(series: list[float]) -> list[float]:
    """Running product of (1 + r); errors out on a wiped-out portfolio."""
    if not series:
        raise ValueError("empty return series")
    curve = []
    value = 1.0
    for r in series:
        if r <= -1.0:
            raise ValueError(f"bankrupt portfolio: month return {r} <= -100%")
        value *= 1.0 + r
        curve.append(value)
    return curve


def annualized_return(series: list[float]) -> float:
    """Geometric annualization of a monthly series."""
    final = cumulative_curve(series)[-1]
    if final <= 0:
        raise ValueError(f"non-positive cumulative value {final}")
    return final ** (12.0 / len(series)) - 1.0


def sharpe_ratio(series: list[float]) -> float:
    """Annualized mean/std of monthly returns, zero risk-free rate."""
    if len(series) < 2:
        raise ValueError("Sharpe ratio needs at least 2 observations")
    arr = np.asarray(series, dtype=float)
    std = float(arr.std(ddof=1))
    if std == 0.0:
        raise ValueError("Sharpe ratio undefined: zero volatility")
    return float(arr.mean() / std * math.sqrt(12.0))


def sentiment_score(ids: TokenIds, lexicon: dict[str, float],
                    vocab: Vocabulary) -> float:
    """Mean polarity over the instance tokens found in the lexicon; 0 if none."""
    hits = [lexicon[vocab.id_to_token[i]] for i in ids
            if vocab.id_to_token[i] in lexicon]
    return float(np.mean(hits)) if hits else 0.0


def universe_benchmark(universe_by_date: dict[date, dict[str, float]],
                       dates: list[date]) -> list[float]:
    """Equally-weighted mean return of every universe stock, per date."""
    out = []
    for d in dates:
        if d not in universe_by_date or not universe_by_date[d]:
            raise DataError(f"universe has no entries at {d}")
        out.append(float(np.mean(sorted(universe_by_date[d].values()))))
    return out


def compare_strategies(forecast_sets: dict[str, list[Forecast]],
                       universe_by_date: dict[date, dict[str, float]]) -> list[dict]:
    """Annualized return / Sharpe per strategy and portfolio kind.

    All strategies must cover the same dates. The first row is the
    equally-weighted universe benchmark, reported under the long-only
    columns only.
    """
    if not forecast_sets:
        raise DataError("no strategies to compare")
    date_sets = {name: sorted({f.date for f in fs})
                 for name, fs in forecast_sets.items()}
    reference = next(iter(date_sets.values()))
    for name, ds in date_sets.items():
        if ds != reference:
            raise DataError(f"strategy {name!r} dates differ from the others")

    bench = universe_benchmark(universe_by_date, reference)
    try:
        bench_sharpe = sharpe_ratio(bench)
    except ValueError:
        bench_sharpe = None
    rows = [{
        "strategy": "universe_equal_weight",
        "long_only_ann_return": annualized_return(bench),
        "long_only_sharpe": bench_sharpe,
        "long_short_ann_return": None,
        "long_short_sharpe": None,
    }]
    for name in sorted(forecast_sets):
        fs = forecast_sets[name]
        row = {"strategy": name}
        for kind in PORTFOLIO_KINDS:
            stats = backtest(fs, PortfolioSpec(kind=kind))
            row[f"{kind}_ann_return"] = stats.annualized_return
            row[f"{kind}_sharpe"] = stats.sharpe
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Artifact writers
# ---------------------------------------------------------------------------

def write_returns_csv(stats: BacktestStats, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "return"])
        for d, r in zip(stats.dates, stats.returns):
            writer.writerow([d.isoformat(), repr(r)])


def write_curve_csv(stats: BacktestStats, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "value"])
        for d, v in zip(stats.dates, stats.curve):
            writer.writerow([d.isoformat(), repr(v)])


def write_stats_json(stats: BacktestStats, path) -> None:
    Path(path).write_text(json.dumps({
        "annualized_return": stats.annualized_return,
        "sharpe": stats.sharpe,
        "n_months": stats.n_months,
    }, sort_keys=True))


def write_comparison_csv(rows: list[dict], path) -> None:
    cols = ["strategy", "long_only_ann_return", "long_only_sharpe",
            "long_short_ann_return", "long_short_sharpe"]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow(["" if row[c] is None else
                             (row[c] if c == "strategy" else repr(row[c]))
                             for c in cols])
