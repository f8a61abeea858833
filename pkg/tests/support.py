"""Shared builders for the test modules."""

import numpy as np

from causalgen.mixers import AttentionParams, MixerKind
from causalgen.model import MlpMode, ModelConfig, build_model
from causalgen.tensor import Tensor

ALL_KINDS = list(MixerKind)
STATIC_KINDS = [k for k in MixerKind if k.parameter_free]
ALL_PAIRS = [(k, m) for k in MixerKind for m in MlpMode]

SMALL = dict(n_layer=4, n_head=4, n_embd=128, block_size=64, vocab_size=65)
TINY = dict(n_layer=1, n_head=2, n_embd=8, block_size=4, vocab_size=11)


def attention_params(rng, d, n_head, dtype=np.float64, scale=0.5):
    w = rng.normal(0.0, scale, size=(d, 3 * d)).astype(dtype)
    return AttentionParams(Tensor(w), Tensor(np.eye(d, dtype=dtype)), n_head)


def tiny_model(mixer, mlp_mode="gelu", seed=0, spread=True):
    """64-bit tiny model; ``spread`` redraws weights at a non-degenerate scale.

    At the 0.02 init many gradients are ~1e-8, where central differences
    are dominated by round-off rather than by any error in backward.
    """
    cfg = ModelConfig(**TINY, mixer=mixer, mlp_mode=mlp_mode)
    model = build_model(cfg, seed=seed, dtype=np.float64)
    if spread:
        rng = np.random.default_rng([seed, 99])
        for p in model.parameters():
            if p.ndim >= 2:
                p.data[...] = rng.normal(0.0, 0.5, p.shape)
            else:
                p.data[...] = rng.uniform(0.5, 1.5, p.shape)
    return model


def random_config(rng):
    n_head = int(rng.integers(1, 7))
    return ModelConfig(
        n_layer=int(rng.integers(1, 9)),
        n_head=n_head,
        n_embd=n_head * int(rng.integers(1, 33)),
        block_size=int(rng.integers(1, 257)),
        vocab_size=int(rng.integers(2, 300)),
    )
