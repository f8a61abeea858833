"""Plain-text run configuration: ``key = value`` lines, ``#`` comments."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from importlib import resources

from .errors import ConfigError
from .mixers import MixerKind
from .model import MlpMode, ModelConfig
from .training import TrainConfig


def _boolean(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text

    return parse


def _optional_float(text):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


_PARSERS = {
    "n_layer": int,
    "n_head": int,
    "n_embd": int,
    "block_size": int,
    "vocab_size": int,
    "mixer": _choice([k.value for k in MixerKind]),
    "mlp_mode": _choice([m.value for m in MlpMode]),
    "mlp_op": _choice(["max", "min"]),
    "dropout": float,
    "max_iters": int,
    "lr": float,
    "lr_decay_iters": int,
    "warmup_iters": int,
    "min_lr": _optional_float,
    "beta1": float,
    "beta2": float,
    "weight_decay": float,
    "grad_clip": float,
    "eval_interval": int,
    "eval_iters": int,
    "batch_size": int,
    "seed": int,
    "data_dir": str,
    "out_dir": str,
    "deterministic": _boolean,
    "precision": lambda s: int(_choice(["32", "64"])(s)),
}


@dataclass
class RunConfig:
    n_layer: int = 4
    n_head: int = 4
    n_embd: int = 128
    block_size: int = 64
    vocab_size: int = 0  # 0: take it from the prepared corpus
    mixer: str = "attention"
    mlp_mode: str = "gelu"
    mlp_op: str = "min"
    dropout: float = 0.0
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
    data_dir: str = "data/shakespeare_char"
    out_dir: str = "out"
    deterministic: bool = False
    precision: int = 32
    origins: dict = field(default_factory=dict, repr=False, compare=False)

    def model_config(self, vocab_size=None):
        vocab = self.vocab_size or vocab_size
        if not vocab:
            raise ConfigError("vocab_size is unknown: set it or prepare a corpus in data_dir")
        return ModelConfig(
            n_layer=self.n_layer,
            n_head=self.n_head,
            n_embd=self.n_embd,
            block_size=self.block_size,
            vocab_size=vocab,
            mixer=self.mixer,
            mlp_mode=self.mlp_mode,
            mlp_op=self.mlp_op,
            dropout=self.dropout,
        )

    def train_config(self):
        return TrainConfig(
            max_iters=self.max_iters,
            lr=self.lr,
            lr_decay_iters=self.lr_decay_iters,
            warmup_iters=self.warmup_iters,
            min_lr=self.min_lr,
            beta1=self.beta1,
            beta2=self.beta2,
            weight_decay=self.weight_decay,
            grad_clip=self.grad_clip,
            eval_interval=self.eval_interval,
            eval_iters=self.eval_iters,
            batch_size=self.batch_size,
            seed=self.seed,
            deterministic=self.deterministic,
        )

    def to_text(self):
        lines = []
        for f in fields(self):
            if f.name == "origins":
                continue
            value = getattr(self, f.name)
            if f.name == "min_lr" and value is None:
                value = self.lr / 10
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def write_resolved(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "resolved.cfg")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())
        return path


def preset_names():
    return sorted(
        p.name[:-4] for p in resources.files("causalgen.presets").iterdir() if p.name.endswith(".cfg")
    )


def resolve_config_path(name):
    """A filesystem path, or the name of a bundled preset (with or without .cfg)."""
    if os.path.exists(name):
        return name
    stem = os.path.basename(name)
    stem = stem[:-4] if stem.endswith(".cfg") else stem
    candidate = resources.files("causalgen.presets") / f"{stem}.cfg"
    if candidate.is_file():
        return str(candidate)
    raise ConfigError(f"config file {name!r} not found (presets: {', '.join(preset_names())})")


def _assign(cfg, key, raw, where):
    if key not in _PARSERS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    try:
        setattr(cfg, key, _PARSERS[key](raw.strip()))
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None
    cfg.origins[key] = where


def parse_config(path=None, overrides=()):
    """Read a config file (optional), then apply ``key=value`` overrides."""
    cfg = RunConfig()
    if path is not None:
        real = resolve_config_path(path)
        with open(real, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                key, sep, value = text.partition("=")
                where = f"{path}:{lineno}"
                if not sep:
                    raise ConfigError(f"{where}: expected 'key = value', got {text!r}")
                _assign(cfg, key.strip(), value, where)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set {item!r}: expected key=value")
        _assign(cfg, key.strip(), value, f"--set {key.strip()}")
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    """Check invariants, naming the offending key and where it was set."""
    def fail(key, msg):
        where = cfg.origins.get(key, "default")
        raise ConfigError(f"{where}: {key}: {msg}")

    try:
        cfg.train_config()
    except ConfigError as exc:
        key = next((k for k in ("warmup_iters", "min_lr", "eval_interval", "eval_iters", "batch_size", "max_iters") if k in str(exc)), "lr")
        fail(key, str(exc))
    try:
        cfg.model_config(vocab_size=cfg.vocab_size or 2)
    except ConfigError as exc:
        key = next((k for k in ("n_embd", "n_head", "n_layer", "block_size", "vocab_size", "dropout") if k in str(exc)), "mixer")
        fail(key, str(exc))
