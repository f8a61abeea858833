"""Training loop, periodic evaluation and loss logging."""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint, read_checkpoint, write_checkpoint, model_from_checkpoint
from .data import sample_batch
from .errors import ConfigError, TrainingError
from .model import ModelConfig, build_model
from .optim import AdamW, clip_grad_norm, lr_at
from .tensor import get_default_dtype, no_grad

LOSS_HEADER = "iter,split,loss,lr,ms_per_iter"


@dataclass
class TrainConfig:
    max_iters: int = 5000
    lr: float = 1e-3
    lr_decay_iters: int = 5000
    warmup_iters: int = 100
    min_lr: float | None = None
    beta1: float = 0.9
    beta2: float = 0.99
    weight_decay: float = 0.1
    grad_clip: float = 1.0
    eval_interval: int = 250
    eval_iters: int = 200
    batch_size: int = 12
    seed: int = 1337
    deterministic: bool = False

    def __post_init__(self):
        if self.min_lr is None:
            self.min_lr = self.lr / 10
        self.validate()

    def validate(self):
        if self.warmup_iters >= self.lr_decay_iters:
            raise ConfigError("warmup_iters must be < lr_decay_iters")
        if self.min_lr > self.lr:
            raise ConfigError("min_lr must be <= lr")
        for name in ("max_iters", "warmup_iters"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("eval_interval", "eval_iters", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    def lr_at(self, it):
        return lr_at(it, self.lr, self.warmup_iters, self.lr_decay_iters, self.min_lr)


@dataclass(frozen=True)
class LossRecord:
    iter: int
    split: str
    loss: float
    lr: float
    ms_per_iter: float

    def row(self):
        return f"{self.iter},{self.split},{self.loss:.6f},{self.lr:.6e},{self.ms_per_iter:.3f}"


@dataclass
class LossLog:
    """Loss records, optionally mirrored line by line to a CSV file."""

    records: list = field(default_factory=list)
    path: str | None = None

    def open(self, path):
        self.path = path
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(LOSS_HEADER + "\n")
            for r in self.records:
                fh.write(r.row() + "\n")

    def append(self, rec: LossRecord):
        if not math.isfinite(rec.loss):
            raise TrainingError(f"non-finite {rec.split} loss at iter {rec.iter}")
        last = self.last(rec.split)
        if last is not None and rec.iter <= last.iter:
            raise TrainingError(f"{rec.split} iterations must increase ({last.iter} -> {rec.iter})")
        self.records.append(rec)
        if self.path:
            with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
                fh.write(rec.row() + "\n")

    def split(self, name):
        return [r for r in self.records if r.split == name]

    def last(self, split):
        rows = self.split(split)
        return rows[-1] if rows else None

    @classmethod
    def read_csv(cls, path):
        records = []
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != LOSS_HEADER.split(","):
                raise ValueError(f"{path}: expected header {LOSS_HEADER!r}")
            for row in reader:
                records.append(
                    LossRecord(
                        int(row["iter"]),
                        row["split"],
                        float(row["loss"]),
                        float(row["lr"]),
                        float(row["ms_per_iter"]),
                    )
                )
        return cls(records)


def estimate_loss(model, store, tc: TrainConfig, rng):
    """Mean loss over ``tc.eval_iters`` fresh batches per split."""
    out = {}
    block = model.config.block_size
    with no_grad():
        for split in ("train", "val"):
            total = 0.0
            for _ in range(tc.eval_iters):
                x, y = sample_batch(store, split, block, tc.batch_size, rng)
                total += model.loss(x, y).item()
            out[split] = total / tc.eval_iters
    return out


@dataclass
class TrainResult:
    log: LossLog
    model: object
    final_val: float
    best_val: float
    iterations: int


def _rng_state(rng):
    return json.dumps(rng.bit_generator.state, separators=(",", ":"), sort_keys=True)


def _set_rng_state(rng, text):
    rng.bit_generator.state = json.loads(text)


def _streams(seed):
    return (np.random.default_rng([seed, 1]), np.random.default_rng([seed, 2]), np.random.default_rng([seed, 3]))


def train(model_cfg: ModelConfig, tc: TrainConfig, out_dir, store, resume=False, dtype=None, echo=print):
    """Train from scratch (or resume from ``ckpt_last.bin``) and log to ``out_dir``.

    Writes ``loss.csv``, ``ckpt_last.bin`` (every evaluation) and
    ``ckpt_best.bin`` (lowest validation loss so far).  Every mixer and MLP
    mode runs through exactly this loop; only the model config differs.
    """
    if model_cfg.vocab_size != store.vocab_size:
        raise ConfigError(
            f"vocab_size={model_cfg.vocab_size} does not match the corpus vocabulary ({store.vocab_size})"
        )
    os.makedirs(out_dir, exist_ok=True)
    last_path = os.path.join(out_dir, "ckpt_last.bin")
    best_path = os.path.join(out_dir, "ckpt_best.bin")
    csv_path = os.path.join(out_dir, "loss.csv")
    batch_rng, eval_rng, drop_rng = _streams(tc.seed)
    dropout_rng = drop_rng if model_cfg.dropout > 0 else None

    log = LossLog()
    start, best_val = 0, math.inf
    if resume and os.path.exists(last_path):
        ckpt = read_checkpoint(last_path)
        model = model_from_checkpoint(ckpt, model_cfg)
        start = ckpt.iteration
        best_val = float(ckpt.meta.get("best_val", "inf"))
        for rng, key in ((batch_rng, "rng_batch"), (eval_rng, "rng_eval"), (drop_rng, "rng_dropout")):
            _set_rng_state(rng, ckpt.meta[key])
        if os.path.exists(csv_path):
            log.records = [r for r in LossLog.read_csv(csv_path).records if r.iter <= start]
    else:
        model = build_model(model_cfg, tc.seed, dtype or get_default_dtype())
        ckpt = None

    decayed, _ = model.decay_groups()
    decay_names = [n for n, p in model.named_parameters() if any(p is q for q in decayed)]
    opt = AdamW(
        model.named_parameters(),
        decay_names,
        betas=(tc.beta1, tc.beta2),
        weight_decay=tc.weight_decay,
    )
    if ckpt is not None:
        opt.load_state(ckpt.optimizer, ckpt.meta.get("opt_step", start))
    log.open(csv_path)

    def snapshot(path, it):
        meta = {
            "best_val": repr(best_val),
            "opt_step": opt.step_count,
            "rng_batch": _rng_state(batch_rng),
            "rng_eval": _rng_state(eval_rng),
            "rng_dropout": _rng_state(drop_rng),
        }
        write_checkpoint(path, Checkpoint(model.config, model.params, it, opt.state_tensors(), meta))

    it = start
    last_val = log.last("val").loss if log.last("val") else math.nan
    tick, steps_since = time.perf_counter(), 0
    while True:
        resumed_here = ckpt is not None and it == start
        if (it % tc.eval_interval == 0 or it == tc.max_iters) and not resumed_here:
            ms = 1000 * (time.perf_counter() - tick) / steps_since if steps_since else 0.0
            logged_ms = 0.0 if tc.deterministic else ms
            losses = estimate_loss(model, store, tc, eval_rng)
            lr_now = tc.lr_at(it)
            log.append(LossRecord(it, "train", losses["train"], lr_now, logged_ms))
            log.append(LossRecord(it, "val", losses["val"], lr_now, logged_ms))
            last_val = losses["val"]
            echo(
                f"iter={it} train={losses['train']:.4f} val={losses['val']:.4f} "
                f"lr={lr_now:.3e} ms_per_iter={ms:.1f}"
            )
            if last_val < best_val:
                best_val = last_val
                snapshot(best_path, it)
            snapshot(last_path, it)
            tick, steps_since = time.perf_counter(), 0
        if it >= tc.max_iters:
            break

        x, y = sample_batch(store, "train", model_cfg.block_size, tc.batch_size, batch_rng)
        model.zero_grad()
        loss = model.loss(x, y, dropout_rng)
        if not math.isfinite(loss.item()):
            raise TrainingError(f"loss became non-finite at iter {it}; last checkpoint kept")
        loss.backward()
        clip_grad_norm(model.parameters(), tc.grad_clip)
        opt.step(tc.lr_at(it))
        it += 1
        steps_since += 1

    return TrainResult(log, model, last_val, best_val, it)
