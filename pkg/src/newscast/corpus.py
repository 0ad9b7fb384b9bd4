"""Tokenization and synthetic newsflow generation.

The tokenizer is whitespace + lowercase with a dedicated UNK id; reserved
special tokens occupy ids 0..4. The synthetic generator writes template-based
headlines and plants a return signal that is an exact linear function of
signal-token counts, so downstream decile and portfolio behavior has an
analytically known ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

PAD, BOS, EOS, MASK, SEP = 0, 1, 2, 3, 4
RESERVED_TOKENS = ("<pad>", "<bos>", "<eos>", "<mask>", "<sep>")
UNK_TOKEN = "<unk>"

TokenIds = list[int]


class Vocabulary:
    """Bijective token-string <-> id map with fixed reserved ids 0..4."""

    def __init__(self, words: list[str]):
        tokens = list(RESERVED_TOKENS) + [UNK_TOKEN]
        seen = set(tokens)
        for w in sorted(set(words)):
            if w in seen:
                raise ConfigError(f"word {w!r} collides with a reserved token")
            tokens.append(w)
            seen.add(w)
        self.id_to_token = tokens
        self.token_to_id = {tok: i for i, tok in enumerate(tokens)}

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK_TOKEN]

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.token_to_id, sort_keys=True))

    @classmethod
    def load(cls, path) -> "Vocabulary":
        mapping = json.loads(Path(path).read_text())
        ids = sorted(mapping.values())
        if ids != list(range(len(ids))):
            raise DataError(f"vocabulary file {path} ids are not a bijection over 0..n-1")
        for tok, want in zip(RESERVED_TOKENS, range(5)):
            if mapping.get(tok) != want:
                raise DataError(f"vocabulary file {path} misplaces reserved token {tok}")
        vocab = cls.__new__(cls)
        vocab.id_to_token = [None] * len(mapping)
        for tok, i in mapping.items():
            vocab.id_to_token[i] = tok
        vocab.token_to_id = dict(mapping)
        return vocab


def tokenize(text: str, vocab: Vocabulary) -> TokenIds:
    """Whitespace-split, lowercased lookup; unknown words map to UNK."""
    unk = vocab.unk_id
    return [vocab.token_to_id.get(w, unk) for w in text.lower().split()]


def detokenize(ids: TokenIds, vocab: Vocabulary) -> str:
    return " ".join(vocab.id_to_token[i] for i in ids)


# ---------------------------------------------------------------------------
# Synthetic newsflow
# ---------------------------------------------------------------------------

_SUBJECTS = ["company", "group", "firm", "maker", "retailer", "lender"]
_VERBS = ["reports", "posts", "announces", "projects", "confirms", "expects"]
_POS_WORDS = ["strong", "solid", "record", "robust", "upbeat", "favorable"]
_NEG_WORDS = ["weak", "poor", "disappointing", "soft", "downbeat", "adverse"]
_NEUTRAL_ADJ = ["quarterly", "annual", "preliminary", "mixed", "updated", "broad"]
_NOUNS = ["profit", "revenue", "earnings", "sales", "guidance", "outlook",
          "demand", "margins"]
_PERIODS = ["quarter", "year", "half", "month"]
_REGIONS = ["domestic", "overseas", "regional", "global"]
_EVENTS = ["results", "review", "update", "call"]
_SECTORS = [
    "adhesives", "aerospace", "agriculture", "airlines", "aluminum", "apparel",
    "appliances", "aquaculture", "asphalt", "automation", "automotive",
    "avionics", "banking", "batteries", "bearings", "beverages", "biotech",
    "brewing", "broadcasting", "cabling", "catering", "cement", "ceramics",
    "chemicals", "coatings", "composites", "computing", "concrete",
    "construction", "consulting", "containers", "cosmetics", "dairies",
    "defense", "dentistry", "diagnostics", "distilling", "dredging",
    "drilling", "electricals", "electronics", "elevators", "energy",
    "engineering", "entertainment", "exploration", "fasteners", "fertilizer",
    "filtration", "fisheries", "flooring", "footwear", "forestry", "forging",
    "foundries", "fragrances", "freight", "furnishings", "gaming", "gasworks",
    "gemstones", "generators", "glass", "groceries", "hardware", "healthcare",
    "hospitality", "housing", "hydraulics", "imaging", "instruments",
    "insurance", "irrigation", "jewelry", "kitchenware", "laboratories",
    "landscaping", "lasers", "leasing", "leisure", "lighting", "logistics",
    "lubricants", "lumber", "machinery", "magnets", "materials", "meatpacking",
    "media", "metals", "microscopy", "milling", "mining", "navigation",
    "nurseries", "optics", "orchards", "packaging", "paints", "paper",
    "pesticides", "petrochemicals", "pharmaceuticals", "pigments", "pipelines",
    "plastics", "plumbing", "polymers", "printing", "propulsion", "publishing",
    "pumps", "quarries", "railroads", "reactors", "refining", "refrigeration",
    "rentals", "restaurants", "roadworks", "robotics", "roofing", "salvage",
    "sanitation", "sawmills", "scaffolding", "seeds", "semiconductors",
    "sensors", "shipbuilding", "shipping", "smelting", "software", "solvents",
    "spirits", "staffing", "steel", "storage", "surveying", "syrups",
    "tanneries", "telecom", "textiles", "tiles", "timber", "tobacco", "tooling",
    "tourism", "transport", "trucking", "turbines", "utilities", "vaccines",
    "valves", "vineyards", "warehousing", "welding", "windows", "wireless",
]

_ADJ_POOL = _POS_WORDS + _NEG_WORDS + _NEUTRAL_ADJ

_EXTENSIONS = (
    ("for", "the", "@period"),
    ("this", "@period"),
    ("in", "@region", "markets"),
    ("amid", "@adj", "@noun"),
    ("after", "the", "@event"),
    ("on", "@adj", "demand"),
    ("in", "the", "@sector", "segment"),
)

_SLOT_POOLS = {
    "@subject": _SUBJECTS,
    "@verb": _VERBS,
    "@adj": _ADJ_POOL,
    "@noun": _NOUNS,
    "@period": _PERIODS,
    "@region": _REGIONS,
    "@event": _EVENTS,
    "@sector": _SECTORS,
}


def grammar_words() -> list[str]:
    """Every word the headline grammar can emit (signal tokens excluded)."""
    words = set()
    for pool in _SLOT_POOLS.values():
        words.update(pool)
    for ext in _EXTENSIONS:
        words.update(w for w in ext if not w.startswith("@"))
    words.update(["the", "markets", "demand", "segment"])
    return sorted(words)


def _fill(slot: str, rng: np.random.Generator) -> str:
    pool = _SLOT_POOLS[slot]
    if slot == "@sector":
        # zipf-ish weighting keeps most sectors rare without ever excluding one
        ranks = np.arange(1, len(pool) + 1, dtype=float)
        weights = 1.0 / ranks
        return pool[rng.choice(len(pool), p=weights / weights.sum())]
    return pool[rng.integers(len(pool))]


def _sentence(rng: np.random.Generator, budget: int) -> list[str]:
    words = ["the", _fill("@subject", rng), _fill("@verb", rng),
             _fill("@adj", rng), _fill("@noun", rng)]
    while len(words) < budget:
        ext = _EXTENSIONS[rng.integers(len(_EXTENSIONS))]
        words.extend(_fill(w, rng) if w.startswith("@") else w for w in ext)
    return words


@dataclass(frozen=True)
class SignalSpec:
    """Planted ground truth: per-token return effect, label noise, base drift."""

    effects: dict[str, float]
    noise_sigma: float = 0.0
    base_return: float = 0.0

    def validate(self, vocab: Vocabulary) -> None:
        for tok in self.effects:
            if tok in RESERVED_TOKENS or tok == UNK_TOKEN:
                raise ConfigError(f"signal token {tok!r} is a reserved token")
            if tok not in vocab.token_to_id:
                raise ConfigError(f"signal token {tok!r} missing from vocabulary")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")


@dataclass(frozen=True)
class UniverseSpec:
    n_stocks: int
    start: date
    n_periods: int
    rebalance: str = "monthly"
    window_days: int = 7

    def validate(self) -> None:
        if self.n_stocks < 10:
            raise ConfigError("decile construction needs at least 10 stocks")
        if self.n_periods < 1:
            raise ConfigError("date range is empty")
        if self.rebalance not in ("monthly", "weekly"):
            raise ConfigError(f"unsupported rebalance frequency {self.rebalance!r}")


def rebalance_dates(spec: UniverseSpec) -> list[date]:
    """Month-end (or weekly) rebalance timesteps starting at spec.start."""
    if spec.rebalance == "weekly":
        return [spec.start + timedelta(days=7 * k) for k in range(spec.n_periods)]
    dates = []
    year, month = spec.start.year, spec.start.month
    for _ in range(spec.n_periods):
        if month == 12:
            next_first = date(year + 1, 1, 1)
        else:
            next_first = date(year, month + 1, 1)
        dates.append(next_first - timedelta(days=1))
        year, month = next_first.year, next_first.month
    return dates


def build_demo_vocabulary(signal_tokens: list[str] | None = None) -> Vocabulary:
    return Vocabulary(grammar_words() + list(signal_tokens or []))


def generate_synthetic(universe_spec: UniverseSpec, signal: SignalSpec,
                       vocab: Vocabulary, seed: int):
    """Deterministic synthetic newsflow plus universe with planted labels.

    For each (stock, rebalance date): 1..5 headlines timestamped inside the
    half-open window [t - W, t), with signal-token occurrences inserted at
    random positions. The forward return is exactly
    base + sum_k effect_k * count_k plus optional Gaussian noise, where
    count_k is the number of occurrences in the window.
    """
    from .data import NewsItem, UniverseEntry  # here to avoid an import cycle

    universe_spec.validate()
    signal.validate(vocab)
    rng = np.random.default_rng(seed)
    signal_tokens = sorted(signal.effects)
    window_s = universe_spec.window_days * 86400.0

    news: list[NewsItem] = []
    entries: list[UniverseEntry] = []
    stock_ids = [f"S{k:03d}" for k in range(1, universe_spec.n_stocks + 1)]
    for t in rebalance_dates(universe_spec):
        t_instant = datetime(t.year, t.month, t.day, tzinfo=timezone.utc)
        for sid in stock_ids:
            n_items = int(rng.integers(1, 6))
            total_budget = int(rng.integers(26, 34))
            budgets = [total_budget // n_items] * n_items
            budgets[0] += total_budget - sum(budgets)
            items = [_sentence(rng, b) for b in budgets]

            counts = {}
            for tok in signal_tokens:
                counts[tok] = int(rng.binomial(3, 0.35))
                for _ in range(counts[tok]):
                    item = items[rng.integers(n_items)]
                    item.insert(int(rng.integers(len(item) + 1)), tok)

            offsets = np.sort(rng.uniform(0.0, window_s, size=n_items))[::-1]
            for item, off in zip(items, offsets):
                ts = t_instant - timedelta(seconds=float(off))
                news.append(NewsItem(stock_id=sid, timestamp=ts, text=" ".join(item)))

            ret = signal.base_return
            ret += sum(signal.effects[tok] * counts[tok] for tok in signal_tokens)
            if signal.noise_sigma > 0:
                ret += float(rng.normal(0.0, signal.noise_sigma))
            entries.append(UniverseEntry(stock_id=sid, date=t, forward_return=ret))
    return news, entries
