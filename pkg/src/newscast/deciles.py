"""Per-date decile assignment and the pooled decile RMSE/precision/return table.

Ranking semantics: at each date, forecasts are sorted ascending (ties broken
by ascending stock id) and rank i of S lands in decile floor(10 * i / S), so
the highest prediction is always decile 9. Pairs are then pooled across dates
per prediction decile, and RMSE, precision (truth decile == prediction
decile), and mean actual return are computed over the pooled members.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from .errors import DataError, InsufficientUniverseError

N_DECILES = 10


@dataclass(frozen=True)
class Forecast:
    stock_id: str
    date: date
    predicted: float
    actual: float


@dataclass(frozen=True)
class DecileRow:
    decile: int
    count: int
    rmse: float
    precision: float
    mean_return: float


DecileTable = list[DecileRow]


def assign_deciles(values: list[tuple[str, float]]) -> dict[str, int]:
    """Decile label 0..9 per key for one date's (key, value) pairs."""
    n = len(values)
    if n < N_DECILES:
        raise InsufficientUniverseError(
            f"decile assignment needs at least {N_DECILES} values, got {n}")
    keys = [k for k, _ in values]
    if len(set(keys)) != n:
        raise DataError("duplicate keys in decile assignment")
    ranked = sorted(values, key=lambda kv: (kv[1], kv[0]))
    return {k: (N_DECILES * i) // n for i, (k, _) in enumerate(ranked)}


def compute_decile_table(forecasts: list[Forecast]) -> DecileTable:
    """Pool (prediction-decile, pair) across dates and aggregate per decile."""
    by_date: dict[date, list[Forecast]] = {}
    for f in forecasts:
        by_date.setdefault(f.date, []).append(f)

    members: list[list[Forecast]] = [[] for _ in range(N_DECILES)]
    truth_match: list[list[bool]] = [[] for _ in range(N_DECILES)]
    for d in sorted(by_date):
        day = sorted(by_date[d], key=lambda f: f.stock_id)
        if len({f.stock_id for f in day}) != len(day):
            raise DataError(f"duplicate stock forecasts at {d}")
        pred_decile = assign_deciles([(f.stock_id, f.predicted) for f in day])
        true_decile = assign_deciles([(f.stock_id, f.actual) for f in day])
        for f in day:
            pd = pred_decile[f.stock_id]
            members[pd].append(f)
            truth_match[pd].append(true_decile[f.stock_id] == pd)

    table = []
    for d in range(N_DECILES):
        group = members[d]
        if not group:
            table.append(DecileRow(decile=d, count=0, rmse=float("nan"),
                                   precision=float("nan"), mean_return=float("nan")))
            continue
        pred = np.array([f.predicted for f in group])
        act = np.array([f.actual for f in group])
        table.append(DecileRow(
            decile=d,
            count=len(group),
            rmse=float(np.sqrt(np.mean((pred - act) ** 2))),
            precision=float(np.mean(truth_match[d])),
            mean_return=float(np.mean(act)),
        ))
    return table


def write_decile_csv(table: DecileTable, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["decile", "count", "rmse", "precision", "mean_return"])
        for row in table:
            writer.writerow([row.decile, row.count, repr(row.rmse),
                             repr(row.precision), repr(row.mean_return)])


def read_forecast_csv(path) -> list[tuple[date, str, float]]:
    """Rows of the `date,stock_id,forecast` interchange file."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"forecast file not found: {path}")
    out = []
    with path.open() as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["date", "stock_id", "forecast"]:
            raise DataError(f"{path}: expected header date,stock_id,forecast, "
                            f"got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append((date.fromisoformat(row["date"]), row["stock_id"],
                            float(row["forecast"])))
            except (ValueError, TypeError) as exc:
                raise DataError(f"{path}: bad forecast row on line {lineno}: {exc}") from exc
    return out


def write_forecast_csv(rows: list[tuple[date, str, float]], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "stock_id", "forecast"])
        for d, sid, value in rows:
            writer.writerow([d.isoformat(), sid, repr(value)])
