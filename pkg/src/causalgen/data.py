"""Character-level corpus preparation and batch sampling.

On-disk cache written by :func:`prepare`::

    <dir>/train.bin   token ids, u16 little-endian
    <dir>/val.bin     token ids, u16 little-endian
    <dir>/vocab.json  {"chars": [...]} in id order, UTF-8
"""

from __future__ import annotations

import json
import os
import urllib.request
from dataclasses import dataclass

import numpy as np

from .errors import DataError

TRAIN_FRACTION = 0.9
_ID_DTYPE = np.dtype("<u2")


class CharTokenizer:
    def __init__(self, chars):
        chars = list(chars)
        if len(set(chars)) != len(chars):
            raise DataError("vocabulary characters must be unique")
        if len(chars) > 65535:
            raise DataError("vocabulary does not fit in u16 ids")
        self.chars = chars
        self.stoi = {c: i for i, c in enumerate(chars)}
        self.itos = dict(enumerate(chars))

    @classmethod
    def from_text(cls, text):
        if not text:
            raise DataError("cannot build a vocabulary from empty text")
        return cls(sorted(set(text)))

    @property
    def vocab_size(self):
        return len(self.chars)

    def encode(self, text):
        try:
            return np.fromiter((self.stoi[c] for c in text), dtype=np.int64, count=len(text))
        except KeyError as exc:
            raise DataError(f"character {exc.args[0]!r} is not in the vocabulary") from None

    def decode(self, ids):
        return "".join(self.itos[int(i)] for i in ids)


def build_vocab(text):
    return CharTokenizer.from_text(text)


@dataclass(frozen=True)
class TokenStore:
    train_ids: np.ndarray
    val_ids: np.ndarray
    tokenizer: CharTokenizer

    @classmethod
    def from_text(cls, text, train_fraction=TRAIN_FRACTION):
        tok = build_vocab(text)
        ids = tok.encode(text)
        cut = int(len(ids) * train_fraction)
        return cls(ids[:cut], ids[cut:], tok)

    def split(self, name):
        if name == "train":
            return self.train_ids
        if name == "val":
            return self.val_ids
        raise DataError(f"unknown split {name!r}")

    @property
    def vocab_size(self):
        return self.tokenizer.vocab_size


def sample_batch(store, split, block, batch, rng):
    """``batch`` random windows of ``block`` tokens and their next-token targets."""
    ids = store.split(split)
    if len(ids) <= block:
        raise DataError(f"{split} split has {len(ids)} tokens, need more than block={block}")
    offsets = rng.integers(0, len(ids) - block, size=batch)
    rows = offsets[:, None] + np.arange(block)
    return ids[rows].astype(np.int64), ids[rows + 1].astype(np.int64)


def read_text(source):
    """Read UTF-8 text from a local path or an http(s) URL."""
    if source.startswith(("http://", "https://")):
        try:
            with urllib.request.urlopen(source, timeout=60) as resp:
                raw = resp.read()
        except OSError as exc:
            raise DataError(f"could not fetch {source}: {exc}") from None
    else:
        try:
            with open(source, "rb") as fh:
                raw = fh.read()
        except OSError as exc:
            raise DataError(f"could not read {source}: {exc}") from None
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"{source} is not valid UTF-8: {exc}") from None


def save_store(store, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    store.train_ids.astype(_ID_DTYPE).tofile(os.path.join(out_dir, "train.bin"))
    store.val_ids.astype(_ID_DTYPE).tofile(os.path.join(out_dir, "val.bin"))
    with open(os.path.join(out_dir, "vocab.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"chars": store.tokenizer.chars}, fh, ensure_ascii=False)


def load_store(data_dir):
    try:
        with open(os.path.join(data_dir, "vocab.json"), encoding="utf-8") as fh:
            chars = json.load(fh)["chars"]
        train = np.fromfile(os.path.join(data_dir, "train.bin"), dtype=_ID_DTYPE)
        val = np.fromfile(os.path.join(data_dir, "val.bin"), dtype=_ID_DTYPE)
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"no prepared corpus in {data_dir}: {exc}") from None
    tok = CharTokenizer(chars)
    for ids in (train, val):
        if ids.size and int(ids.max()) >= tok.vocab_size:
            raise DataError(f"token id out of vocabulary range in {data_dir}")
    return TokenStore(train.astype(np.int64), val.astype(np.int64), tok)


def prepare(source, out_dir):
    """Encode ``source`` (path or URL) and cache it under ``out_dir``."""
    store = TokenStore.from_text(read_text(source))
    save_store(store, out_dir)
    return store
