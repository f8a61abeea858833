"""Decoder-only language models with attention or parameter-free causal mixers."""

from .mixers import MixerKind
from .model import MlpMode, ModelConfig, build_model, count_params
from .tensor import Tensor, no_grad, precision

__all__ = [
    "MixerKind",
    "MlpMode",
    "ModelConfig",
    "Tensor",
    "build_model",
    "count_params",
    "no_grad",
    "precision",
]

__version__ = "0.1.0"
