"""Tokenizer, token cache and batch sampling."""

import numpy as np
import pytest

from causalgen.data import (
    CharTokenizer,
    TokenStore,
    build_vocab,
    load_store,
    prepare,
    sample_batch,
)
from causalgen.errors import DataError

TEXT = "First Citizen:\nBefore we proceed any further, hear me speak.\n\nAll:\nSpeak, speak.\n" * 40


def test_vocab_sorted_unique():
    tok = build_vocab("abcba")
    assert tok.chars == ["a", "b", "c"] and tok.vocab_size == 3


def test_round_trip():
    tok = build_vocab("hello world")
    assert tok.decode(tok.encode("hello")) == "hello"
    ids = np.arange(tok.vocab_size)
    np.testing.assert_array_equal(tok.encode(tok.decode(ids)), ids)


def test_empty_text_is_an_error():
    with pytest.raises(DataError):
        build_vocab("")


def test_unknown_character():
    with pytest.raises(DataError):
        build_vocab("abc").encode("abd")


def test_split_is_contiguous_and_complete():
    store = TokenStore.from_text(TEXT)
    whole = store.tokenizer.encode(TEXT)
    np.testing.assert_array_equal(np.concatenate([store.train_ids, store.val_ids]), whole)
    assert len(store.train_ids) == int(0.9 * len(TEXT))
    again = TokenStore.from_text(TEXT)
    np.testing.assert_array_equal(again.val_ids, store.val_ids)


def test_cache_round_trip(tmp_path):
    src = tmp_path / "input.txt"
    src.write_text(TEXT, encoding="utf-8")
    store = prepare(str(src), str(tmp_path / "data"))
    loaded = load_store(str(tmp_path / "data"))
    assert loaded.tokenizer.chars == store.tokenizer.chars
    np.testing.assert_array_equal(loaded.train_ids, store.train_ids)
    np.testing.assert_array_equal(loaded.val_ids, store.val_ids)
    raw = (tmp_path / "data" / "train.bin").read_bytes()
    assert len(raw) == 2 * len(store.train_ids)
    assert int.from_bytes(raw[:2], "little") == store.train_ids[0]


def test_missing_cache(tmp_path):
    with pytest.raises(DataError):
        load_store(str(tmp_path))


def test_unreadable_source(tmp_path):
    with pytest.raises(DataError):
        prepare(str(tmp_path / "nope.txt"), str(tmp_path / "out"))


def test_batch_targets_are_shifted_inputs():
    store = TokenStore.from_text(TEXT)
    x, y = sample_batch(store, "train", 16, 8, np.random.default_rng(0))
    assert x.shape == y.shape == (8, 16)
    np.testing.assert_array_equal(y[:, :-1], x[:, 1:])
    ids = store.train_ids
    for row_x, row_y in zip(x, y):
        starts = np.flatnonzero(np.all(np.lib.stride_tricks.sliding_window_view(ids, 17) == np.append(row_x, row_y[-1]), axis=1))
        assert starts.size > 0


def test_batches_decode_to_corpus_substrings():
    store = TokenStore.from_text(TEXT)
    x, _ = sample_batch(store, "val", 20, 4, np.random.default_rng(1))
    for row in x:
        assert store.tokenizer.decode(row) in TEXT
        assert row.max() < store.vocab_size


def test_same_seed_same_batches():
    store = TokenStore.from_text(TEXT)
    a = sample_batch(store, "train", 8, 4, np.random.default_rng(42))
    b = sample_batch(store, "train", 8, 4, np.random.default_rng(42))
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)


def test_short_split():
    store = TokenStore(np.arange(5), np.arange(5), CharTokenizer("abcde"))
    with pytest.raises(DataError):
        sample_batch(store, "val", 5, 1, np.random.default_rng(0))


def test_offsets_are_uniform():
    n, block, draws, buckets = 1000, 8, 10_000, 10
    # token id == position, so x[:, 0] is the sampled offset
    pos = np.arange(n)
    store = TokenStore(pos, pos, CharTokenizer([chr(0x100 + i) for i in range(n)]))
    rng = np.random.default_rng(3)
    starts = np.concatenate([sample_batch(store, "train", block, 100, rng)[0][:, 0] for _ in range(draws // 100)])
    assert starts.min() >= 0 and starts.max() <= n - block - 1
    counts, _ = np.histogram(starts, bins=buckets, range=(0, n - block))
    expected = draws / buckets
    sigma = np.sqrt(draws * (1 / buckets) * (1 - 1 / buckets))
    assert np.all(np.abs(counts - expected) < 3 * sigma)
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 < 27.88  # 99.9th percentile, 9 degrees of freedom
