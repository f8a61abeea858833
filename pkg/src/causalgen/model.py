"""Decoder-only language model with a pluggable sequence mixer."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import functional as F
from .errors import ConfigError, ShapeError
from .mixers import AttentionParams, MixerKind, apply_mixer, causal_context_mix
from .tensor import Tensor, get_default_dtype, no_grad


class MlpMode(str, enum.Enum):
    GELU = "gelu"
    GENERATIVE_POST_UP = "generative_post_up"
    GENERATIVE_INNER_SIMPLE = "generative_inner_simple"
    GENERATIVE_PRE = "generative_pre"

    def __str__(self):
        return self.value


@dataclass
class ModelConfig:
    n_layer: int = 4
    n_head: int = 4
    n_embd: int = 128
    block_size: int = 64
    vocab_size: int = 65
    mixer: MixerKind = MixerKind.ATTENTION
    mlp_mode: MlpMode = MlpMode.GELU
    mlp_op: str = "min"
    dropout: float = 0.0

    def __post_init__(self):
        try:
            self.mixer = MixerKind(self.mixer)
            self.mlp_mode = MlpMode(self.mlp_mode)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.validate()

    def validate(self):
        for name in ("n_layer", "n_head", "n_embd", "block_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.vocab_size < 2:
            raise ConfigError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.mixer is MixerKind.ATTENTION and self.n_embd % self.n_head:
            raise ConfigError(f"n_embd={self.n_embd} is not divisible by n_head={self.n_head}")
        if self.mlp_op not in ("max", "min"):
            raise ConfigError(f"mlp_op must be max or min, got {self.mlp_op!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def mlp_width(self):
        if self.mlp_mode is MlpMode.GENERATIVE_INNER_SIMPLE:
            return self.n_embd
        return 4 * self.n_embd

    def to_dict(self):
        d = asdict(self)
        d["mixer"] = self.mixer.value
        d["mlp_mode"] = self.mlp_mode.value
        return d

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def parameter_shapes(cfg: ModelConfig):
    """Ordered (name, shape) pairs for every parameter of ``cfg``."""
    d, inner = cfg.n_embd, cfg.mlp_width
    shapes = [("wte", (cfg.vocab_size, d)), ("wpe", (cfg.block_size, d))]
    for i in range(cfg.n_layer):
        pre = f"h.{i}."
        shapes.append((pre + "ln_1", (d,)))
        if cfg.mixer is MixerKind.ATTENTION:
            shapes.append((pre + "attn.w_qkv", (d, 3 * d)))
        shapes.append((pre + "attn.w_proj", (d, d)))
        shapes.append((pre + "ln_2", (d,)))
        shapes.append((pre + "mlp.w_fc", (d, inner)))
        shapes.append((pre + "mlp.w_proj", (inner, d)))
    shapes.append(("ln_f", (d,)))
    return shapes


class Model:
    """Parameters plus the forward pass.

    The LM head reuses ``wte``: logits = h @ wte^T, so both uses write
    gradients into the same tensor.
    """

    def __init__(self, cfg: ModelConfig, params: dict):
        self.config = cfg
        self.params = params
        expected = parameter_shapes(cfg)
        if [n for n, _ in expected] != list(params):
            raise ConfigError("parameter names do not match the configuration")
        for name, shape in expected:
            if params[name].shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {params[name].shape}")

    def named_parameters(self):
        return list(self.params.items())

    def parameters(self):
        return list(self.params.values())

    def decay_groups(self):
        """(decayed, non_decayed) parameter lists: matrices vs norm weights."""
        decayed = [p for p in self.params.values() if p.ndim >= 2]
        plain = [p for p in self.params.values() if p.ndim < 2]
        return decayed, plain

    @property
    def dtype(self):
        return self.params["wte"].dtype

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def _mlp(self, x, pre):
        cfg = self.config
        w_fc, w_proj = self.params[pre + "mlp.w_fc"], self.params[pre + "mlp.w_proj"]
        if cfg.mlp_mode is MlpMode.GELU:
            return F.gelu(x @ w_fc) @ w_proj
        if cfg.mlp_mode is MlpMode.GENERATIVE_PRE:
            return F.gelu(causal_context_mix(x, cfg.mlp_op) @ w_fc) @ w_proj
        return causal_context_mix(x @ w_fc, cfg.mlp_op) @ w_proj

    def forward(self, tokens, rng=None):
        """Logits [B, T, vocab] for integer tokens [B, T].

        ``rng`` enables dropout (training); None means evaluation.
        """
        cfg, p = self.config, self.params
        ids = np.asarray(tokens)
        if ids.ndim == 1:
            ids = ids[None, :]
        n_t = ids.shape[1]
        if n_t > cfg.block_size:
            raise ShapeError(f"sequence length {n_t} exceeds block_size {cfg.block_size}")
        if n_t < 1:
            raise ShapeError("empty token sequence")
        x = F.embedding(p["wte"], ids) + p["wpe"][:n_t]
        x = F.dropout(x, cfg.dropout, rng)
        for i in range(cfg.n_layer):
            pre = f"h.{i}."
            h = F.layer_norm(x, p[pre + "ln_1"])
            attn = None
            if cfg.mixer is MixerKind.ATTENTION:
                attn = AttentionParams(p[pre + "attn.w_qkv"], p[pre + "attn.w_proj"], cfg.n_head)
            mixed = apply_mixer(cfg.mixer, h, attn) @ p[pre + "attn.w_proj"]
            x = x + F.dropout(mixed, cfg.dropout, rng)
            h = F.layer_norm(x, p[pre + "ln_2"])
            x = x + F.dropout(self._mlp(h, pre), cfg.dropout, rng)
        x = F.layer_norm(x, p["ln_f"])
        return x @ p["wte"].T

    __call__ = forward

    def loss(self, tokens, targets, rng=None):
        return F.cross_entropy_logits(self.forward(tokens, rng), targets)


def build_model(cfg: ModelConfig, seed=0, dtype=None) -> Model:
    """Initialize a model deterministically from ``seed``.

    Weights ~ N(0, 0.02); residual projections (``*.w_proj``) use
    0.02 / sqrt(2 * n_layer); norm weights start at 1.  Draws are made in
    float64 and cast, so 32- and 64-bit models from one seed agree.
    """
    cfg.validate()
    dtype = np.dtype(dtype or get_default_dtype())
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in parameter_shapes(cfg):
        if len(shape) == 1:
            data = np.ones(shape)
        else:
            std = 0.02 / math.sqrt(2 * cfg.n_layer) if name.endswith("w_proj") else 0.02
            data = rng.normal(0.0, std, size=shape)
        params[name] = Tensor(data.astype(dtype), requires_grad=True, name=name)
    return Model(cfg, params)


def count_params(model):
    """(decayed, non_decayed, reported_total).

    reported_total leaves out the position embedding table.
    """
    decayed, plain = model.decay_groups()
    n_decayed = sum(p.size for p in decayed)
    n_plain = sum(p.size for p in plain)
    return n_decayed, n_plain, n_decayed + n_plain - model.params["wpe"].size


def count_params_for(cfg: ModelConfig):
    """count_params without allocating weights."""
    decayed = plain = 0
    for name, shape in parameter_shapes(cfg):
        n = math.prod(shape)
        if len(shape) >= 2:
            decayed += n
        else:
            plain += n
    return decayed, plain, decayed + plain - cfg.block_size * cfg.n_embd


def generate(model, prompt, n_new, temperature=1.0, top_k=None, seed=0, empty_id=0):
    """Sample ``n_new`` tokens after ``prompt``.

    An empty prompt starts from ``empty_id`` (the newline id for the
    character vocabularies built by :mod:`causalgen.data`).  ``top_k=1``
    is greedy decoding.
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    rng = np.random.default_rng(seed)
    seq = [int(t) for t in prompt] or [int(empty_id)]
    block = model.config.block_size
    with no_grad():
        for _ in range(n_new):
            ctx = np.asarray(seq[-block:], dtype=np.int64)[None, :]
            logits = model.forward(ctx).data[0, -1].astype(np.float64) / temperature
            if top_k is not None and top_k < logits.size:
                if top_k == 1:
                    seq.append(int(np.argmax(logits)))
                    continue
                cutoff = np.sort(logits)[-top_k]
                logits = np.where(logits < cutoff, -np.inf, logits)
            probs = np.exp(logits - logits.max())
            probs /= probs.sum()
            nxt = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
            seq.append(min(nxt, probs.size - 1))
    return seq
