"""Tokenizer, vocabulary, and synthetic-generator contracts."""

from datetime import date

import numpy as np
import pytest

from newscast.corpus import (BOS, EOS, MASK, PAD, SEP, SignalSpec, UniverseSpec,
                             Vocabulary, build_demo_vocabulary, detokenize,
                             generate_synthetic, grammar_words, rebalance_dates,
                             tokenize)
from newscast.errors import ConfigError


@pytest.fixture(scope="module")
def vocab():
    return build_demo_vocabulary(["expansion", "writedown"])


class TestVocabulary:
    def test_reserved_ids_fixed(self, vocab):
        assert (PAD, BOS, EOS, MASK, SEP) == (0, 1, 2, 3, 4)
        assert vocab.id_to_token[:5] == ["<pad>", "<bos>", "<eos>", "<mask>", "<sep>"]

    def test_bijection(self, vocab):
        assert len(vocab.token_to_id) == len(vocab.id_to_token) == vocab.size
        for tok, i in vocab.token_to_id.items():
            assert vocab.id_to_token[i] == tok

    def test_save_load_roundtrip(self, vocab, tmp_path):
        path = tmp_path / "vocab.json"
        vocab.save(path)
        loaded = Vocabulary.load(path)
        assert loaded.token_to_id == vocab.token_to_id

    def test_size_within_budget(self, vocab):
        assert vocab.size <= 512


class TestTokenize:
    def test_empty_string(self, vocab):
        assert tokenize("", vocab) == []

    def test_direct_lookup(self, vocab):
        ids = tokenize("Strong PROFIT", vocab)
        assert ids == [vocab.token_to_id["strong"], vocab.token_to_id["profit"]]

    def test_unknown_maps_to_unk(self, vocab):
        ids = tokenize("profit frobnicate", vocab)
        assert ids == [vocab.token_to_id["profit"], vocab.unk_id]

    def test_roundtrip_on_known_text(self, vocab):
        text = "the company reports strong profit for the quarter"
        ids = tokenize(text, vocab)
        assert tokenize(detokenize(ids, vocab), vocab) == ids


class TestSignalSpec:
    def test_rejects_reserved_token(self, vocab):
        with pytest.raises(ConfigError, match="reserved"):
            SignalSpec(effects={"<mask>": 0.05}).validate(vocab)

    def test_rejects_missing_token(self, vocab):
        with pytest.raises(ConfigError, match="missing"):
            SignalSpec(effects={"notaword": 0.05}).validate(vocab)


class TestUniverseSpec:
    def test_needs_ten_stocks(self):
        with pytest.raises(ConfigError, match="10 stocks"):
            UniverseSpec(n_stocks=9, start=date(2020, 1, 1), n_periods=3).validate()

    def test_monthly_dates_are_month_ends(self):
        spec = UniverseSpec(n_stocks=10, start=date(2019, 11, 15), n_periods=4)
        assert rebalance_dates(spec) == [date(2019, 11, 30), date(2019, 12, 31),
                                         date(2020, 1, 31), date(2020, 2, 29)]


class TestGenerateSynthetic:
    def test_same_seed_identical_output(self, vocab):
        spec = UniverseSpec(n_stocks=12, start=date(2020, 1, 1), n_periods=2)
        signal = SignalSpec(effects={"expansion": 0.05}, noise_sigma=0.01)
        a = generate_synthetic(spec, signal, vocab, seed=7)
        b = generate_synthetic(spec, signal, vocab, seed=7)
        assert a == b

    def test_noise_free_labels_are_exact_linear_function_of_counts(self, vocab):
        from datetime import datetime, timedelta, timezone

        spec = UniverseSpec(n_stocks=15, start=date(2020, 1, 1), n_periods=3)
        signal = SignalSpec(effects={"expansion": 0.05, "writedown": -0.05},
                            noise_sigma=0.0, base_return=0.002)
        news, entries = generate_synthetic(spec, signal, vocab, seed=3)
        # independent recount of window occurrences from the emitted text
        for e in entries:
            t = datetime(e.date.year, e.date.month, e.date.day, tzinfo=timezone.utc)
            lo = t - timedelta(days=spec.window_days)
            count = {tok: 0 for tok in signal.effects}
            for item in news:
                if item.stock_id == e.stock_id and lo <= item.timestamp < t:
                    for tok in signal.effects:
                        count[tok] += item.text.split().count(tok)
            expected = signal.base_return + sum(signal.effects[t] * count[t]
                                                for t in signal.effects)
            assert e.forward_return == pytest.approx(expected, abs=1e-15)

    def test_each_stock_date_has_one_to_five_items(self, vocab):
        spec = UniverseSpec(n_stocks=10, start=date(2020, 1, 1), n_periods=2)
        signal = SignalSpec(effects={"expansion": 0.05})
        news, entries = generate_synthetic(spec, signal, vocab, seed=1)
        counts: dict[tuple, int] = {}
        for item in news:
            key = (item.stock_id, item.timestamp.month)
            counts[key] = counts.get(key, 0) + 1
        assert len(entries) == 20
        assert len(counts) == 20  # every (stock, rebalance month) got news
        assert all(1 <= c <= 5 for c in counts.values())

    def test_all_words_in_vocabulary(self, vocab):
        spec = UniverseSpec(n_stocks=10, start=date(2020, 1, 1), n_periods=1)
        signal = SignalSpec(effects={"expansion": 0.05})
        news, _ = generate_synthetic(spec, signal, vocab, seed=5)
        unk = vocab.unk_id
        for item in news:
            assert unk not in tokenize(item.text, vocab)
