"""Binary checkpoint format.

Layout, all integers little-endian::

    b"CGLM"  u32 version=1
    u32 len, UTF-8 header of key=value lines (model config, iteration, extras)
    u32 tensor count
    per tensor: u32 len, UTF-8 name, u8 dtype (0=f32, 1=f64), u8 rank,
                rank x u32 dims, raw IEEE-754 payload
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError
from .model import Model, ModelConfig
from .tensor import Tensor

MAGIC = b"CGLM"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}
_INT_KEYS = {"n_layer", "n_head", "n_embd", "block_size", "vocab_size"}


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict
    iteration: int = 0
    optimizer: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def _header(ckpt):
    lines = [f"{k}={v}" for k, v in ckpt.config.to_dict().items()]
    lines.append(f"iteration={ckpt.iteration}")
    lines.extend(f"{k}={v}" for k, v in ckpt.meta.items())
    return "\n".join(lines) + "\n"


def _parse_header(text):
    values = {}
    for line in text.splitlines():
        key, sep, val = line.partition("=")
        if not sep:
            raise CheckpointError(f"malformed header line {line!r}")
        values[key] = val
    cfg_kwargs = {}
    for name in ModelConfig.field_names():
        if name not in values:
            raise CheckpointError(f"header is missing {name}")
        raw = values.pop(name)
        if name in _INT_KEYS:
            cfg_kwargs[name] = int(raw)
        elif name == "dropout":
            cfg_kwargs[name] = float(raw)
        else:
            cfg_kwargs[name] = raw
    iteration = int(values.pop("iteration", "0"))
    return ModelConfig(**cfg_kwargs), iteration, values


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    out = bytearray(MAGIC)
    out += struct.pack("<I", VERSION)
    header = _header(ckpt).encode("utf-8")
    out += struct.pack("<I", len(header)) + header
    tensors = [(n, np.asarray(getattr(t, "data", t))) for n, t in ckpt.params.items()]
    tensors += list(ckpt.optimizer.items())
    out += struct.pack("<I", len(tensors))
    for name, arr in tensors:
        code = _CODES.get(arr.dtype)
        if code is None:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        raw_name = name.encode("utf-8")
        out += struct.pack("<I", len(raw_name)) + raw_name
        out += struct.pack("<BB", code, arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
    return bytes(out)


class _Reader:
    def __init__(self, buf):
        self.buf, self.pos = buf, 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CheckpointError("checkpoint is truncated")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise CheckpointError("bad magic, not a CGLM checkpoint")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (hlen,) = r.unpack("<I")
    try:
        header = r.take(hlen).decode("utf-8")
    except UnicodeDecodeError:
        raise CheckpointError("header is not valid UTF-8") from None
    try:
        cfg, iteration, meta = _parse_header(header)
    except CheckpointError:
        raise
    except ValueError as exc:
        raise CheckpointError(f"bad checkpoint header: {exc}") from None
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (nlen,) = r.unpack("<I")
        name = r.take(nlen).decode("utf-8")
        code, rank = r.unpack("<BB")
        if code not in _DTYPES:
            raise CheckpointError(f"{name}: unknown dtype code {code}")
        shape = r.unpack(f"<{rank}I")
        dt = _DTYPES[code]
        n = int(np.prod(shape, dtype=np.int64)) if rank else 1
        arr = np.frombuffer(r.take(n * dt.itemsize), dtype=dt).reshape(shape)
        tensors[name] = arr.astype(dt.newbyteorder("="), copy=True)
    if r.pos != len(buf):
        raise CheckpointError("trailing bytes after the last tensor")
    params = {k: v for k, v in tensors.items() if not k.startswith("opt.")}
    optimizer = {k: v for k, v in tensors.items() if k.startswith("opt.")}
    return Checkpoint(cfg, params, iteration, optimizer, meta)


def write_checkpoint(path, ckpt: Checkpoint):
    """Write atomically: a partial file never replaces a good one."""
    data = encode_checkpoint(ckpt)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def read_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())


def save_checkpoint(model, path, iteration=0, optimizer=None, meta=None):
    ckpt = Checkpoint(model.config, model.params, iteration, optimizer or {}, dict(meta or {}))
    write_checkpoint(path, ckpt)


def model_from_checkpoint(ckpt: Checkpoint, config: ModelConfig | None = None) -> Model:
    if config is not None and config.to_dict() != ckpt.config.to_dict():
        diff = sorted(
            k for k, v in config.to_dict().items() if ckpt.config.to_dict().get(k) != v
        )
        raise CheckpointError(f"checkpoint config differs from requested config in: {', '.join(diff)}")
    params = {n: Tensor(a, requires_grad=True, name=n) for n, a in ckpt.params.items()}
    try:
        return Model(ckpt.config, params)
    except ValueError as exc:
        raise CheckpointError(str(exc)) from None


def load_checkpoint(path, config: ModelConfig | None = None) -> Model:
    """Load a model, rejecting a file whose config differs from ``config``."""
    return model_from_checkpoint(read_checkpoint(path), config)
