"""Newsflow and universe ingestion, look-back-window instances, date splits.

The news window is half-open [t - W, t): an item stamped exactly at the
rebalance timestep is tomorrow's information and is excluded; one exactly at
t - W is included. Truncation keeps the most recent tokens.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

from .corpus import BOS, EOS, MASK, SEP, TokenIds, Vocabulary, tokenize
from .errors import DataError


@dataclass(frozen=True)
class NewsItem:
    stock_id: str
    timestamp: datetime
    text: str


@dataclass(frozen=True)
class UniverseEntry:
    stock_id: str
    date: date
    forward_return: float


@dataclass(frozen=True)
class Instance:
    """One (stock, date) training/test record: token ids plus the label."""
    stock_id: str
    date: date
    ids: TokenIds
    label: float


@dataclass
class DatasetSplit:
    train: list[Instance]
    validation: list[Instance]
    test: list[Instance]
    train_end: date
    val_end: date

    def manifest(self) -> dict:
        return {
            "train_end": self.train_end.isoformat(),
            "val_end": self.val_end.isoformat(),
            "counts": {"train": len(self.train), "validation": len(self.validation),
                       "test": len(self.test)},
        }


def _parse_instant(raw: str) -> datetime:
    ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts


def load_news(path) -> list[NewsItem]:
    """Parse one-JSON-object-per-line newsflow, sorted by (stock, timestamp)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"news file not found: {path}")
    items = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                item = NewsItem(stock_id=str(obj["stock_id"]),
                                timestamp=_parse_instant(obj["timestamp"]),
                                text=str(obj["text"]))
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise DataError(f"{path}: malformed news line {lineno}: {exc}") from exc
            if not item.stock_id:
                raise DataError(f"{path}: empty stock_id on line {lineno}")
            items.append(item)
    items.sort(key=lambda n: (n.stock_id, n.timestamp))
    return items


def write_news_jsonl(news: list[NewsItem], path) -> None:
    with Path(path).open("w") as fh:
        for item in news:
            ts = item.timestamp.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")
            fh.write(json.dumps({"stock_id": item.stock_id, "timestamp": ts,
                                 "text": item.text}) + "\n")


def load_universe(path) -> list[UniverseEntry]:
    """Parse the `date,stock_id,forward_return` CSV; duplicate keys are an error."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"universe file not found: {path}")
    entries = []
    seen = set()
    with path.open() as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["date", "stock_id", "forward_return"]:
            raise DataError(f"{path}: expected header date,stock_id,forward_return, "
                            f"got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            try:
                d = date.fromisoformat(row["date"])
                ret = float(row["forward_return"])
            except (ValueError, TypeError) as exc:
                raise DataError(f"{path}: bad universe row on line {lineno}: {exc}") from exc
            key = (row["stock_id"], d)
            if key in seen:
                raise DataError(f"{path}: duplicate (stock, date) {key} on line {lineno}")
            seen.add(key)
            entries.append(UniverseEntry(stock_id=row["stock_id"], date=d,
                                         forward_return=ret))
    return entries


def write_universe_csv(entries: list[UniverseEntry], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "stock_id", "forward_return"])
        for e in entries:
            writer.writerow([e.date.isoformat(), e.stock_id, repr(e.forward_return)])


def index_news(news: list[NewsItem]) -> dict[str, list[NewsItem]]:
    """Per-stock lists sorted by timestamp (ties keep input order)."""
    by_stock: dict[str, list[NewsItem]] = {}
    for item in news:
        by_stock.setdefault(item.stock_id, []).append(item)
    for items in by_stock.values():
        items.sort(key=lambda n: n.timestamp)
    return by_stock


def window_news(by_stock: dict[str, list[NewsItem]], stock_id: str, t: date,
                window_days: int) -> list[NewsItem]:
    """Items for the stock with timestamp in [t - W, t), ascending."""
    t_instant = datetime(t.year, t.month, t.day, tzinfo=timezone.utc)
    lo = t_instant - timedelta(days=window_days)
    return [n for n in by_stock.get(stock_id, [])
            if lo <= n.timestamp < t_instant]


def _assemble_ids(texts: list[str], vocab: Vocabulary, max_len: int,
                  arch_kind: str) -> TokenIds:
    content: TokenIds = []
    for i, text in enumerate(texts):
        if i > 0:
            content.append(SEP)
        content.extend(tokenize(text, vocab))
    if arch_kind == "decoder":
        room = max_len - 2  # BOS + EOS
        return [BOS] + content[-room:] + [EOS]
    if arch_kind == "encoder":
        room = max_len - 1  # appended EOS reuses the mask id
        return content[-room:] + [MASK]
    raise ValueError(f"arch_kind must be encoder|decoder, got {arch_kind!r}")


def build_instance(stock_id: str, t: date, window_days: int,
                   by_stock: dict[str, list[NewsItem]], vocab: Vocabulary,
                   max_len: int, arch_kind: str,
                   universe: dict[tuple[str, date], float]) -> Instance | None:
    """Concatenate the stock's window news into one instance, or None if empty.

    The most recent tokens are kept when the joined sequence overflows
    max_len; the final content token before EOS is always the newest.
    """
    key = (stock_id, t)
    if key not in universe:
        raise DataError(f"no universe entry for {stock_id} at {t}")
    items = window_news(by_stock, stock_id, t, window_days)
    if not items:
        return None
    ids = _assemble_ids([n.text for n in items], vocab, max_len, arch_kind)
    return Instance(stock_id=stock_id, date=t, ids=ids, label=universe[key])


def build_instances(entries: list[UniverseEntry], news: list[NewsItem],
                    vocab: Vocabulary, window_days: int, max_len: int,
                    arch_kind: str) -> list[Instance]:
    """Instances for every universe entry that has window news."""
    by_stock = index_news(news)
    universe = {(e.stock_id, e.date): e.forward_return for e in entries}
    out = []
    for e in sorted(entries, key=lambda e: (e.date, e.stock_id)):
        inst = build_instance(e.stock_id, e.date, window_days, by_stock, vocab,
                              max_len, arch_kind, universe)
        if inst is not None:
            out.append(inst)
    return out


def split_dataset(instances: list[Instance], train_end: date, val_end: date) -> DatasetSplit:
    """Chronological partition: train <= train_end < validation <= val_end < test."""
    if train_end >= val_end:
        raise DataError(f"train_end {train_end} must precede val_end {val_end}")
    train = [i for i in instances if i.date <= train_end]
    val = [i for i in instances if train_end < i.date <= val_end]
    test = [i for i in instances if i.date > val_end]
    for name, part in (("train", train), ("validation", val), ("test", test)):
        if not part:
            warnings.warn(f"{name} split is empty for boundaries "
                          f"({train_end}, {val_end})", stacklevel=2)
    return DatasetSplit(train=train, validation=val, test=test,
                        train_end=train_end, val_end=val_end)
