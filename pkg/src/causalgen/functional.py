"""Fused neural-network operations with hand-written backward rules."""

from __future__ import annotations

import math

import numpy as np

from .errors import ContractError
from .tensor import Tensor, as_array

_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    a = x.data
    a2 = a * a
    t = a2 * (0.044715 * _GELU_C)
    t += _GELU_C
    t *= a
    np.tanh(t, out=t)
    y = t + 1.0
    y *= a
    y *= 0.5

    def backward(g):
        # 0.5 (1 + t) + 0.5 x (1 - t^2) * c (1 + 3 * 0.044715 x^2)
        inner = a2 * (3 * 0.044715 * _GELU_C)
        inner += _GELU_C
        inner *= a
        inner *= 1.0 - t * t
        inner += 1.0 + t
        inner *= 0.5
        inner *= g
        return (inner,)

    return Tensor.from_op(y, (x,), backward)


def causal_mask(t):
    """Boolean [t, t] mask, True where position j > i is disallowed."""
    return np.triu(np.ones((t, t), dtype=bool), k=1)


def softmax_lastdim(x: Tensor, mask=None) -> Tensor:
    """Softmax over the last axis.

    ``mask`` is a boolean array broadcastable to ``x`` with True marking
    disallowed entries; those come out as exactly 0.
    """
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        if mask.all(axis=-1).any():
            raise ContractError("softmax row has no unmasked entries")
        z = np.where(mask, -np.inf, z)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return Tensor.from_op(s, (x,), backward)


def layer_norm(x: Tensor, weight: Tensor, eps=1e-5) -> Tensor:
    """Bias-free layer norm over the last axis."""
    a = x.data
    mu = a.mean(axis=-1, keepdims=True)
    xc = a - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    w = weight.data

    def backward(g):
        gw = (g * xhat).reshape(-1, a.shape[-1]).sum(axis=0)
        gh = g * w
        gx = rstd * (
            gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, gw

    return Tensor.from_op(xhat * w, (x, weight), backward)


def cross_entropy_logits(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under ``logits``."""
    z = logits.data
    v = z.shape[-1]
    tgt = np.asarray(as_array(targets)).astype(np.int64, copy=False)
    if tgt.shape != z.shape[:-1]:
        raise ContractError(f"targets shape {tgt.shape} does not match logits {z.shape}")
    if tgt.size and (tgt.min() < 0 or tgt.max() >= v):
        raise IndexError(f"target id out of range [0, {v})")
    flat = z.reshape(-1, v)
    t = tgt.reshape(-1)
    m = flat.max(axis=1, keepdims=True)
    e = np.exp(flat - m)
    se = e.sum(axis=1, keepdims=True)
    lse = np.log(se) + m
    n = flat.shape[0]
    rows = np.arange(n)
    loss = (lse[:, 0] - flat[rows, t]).mean()

    def backward(g):
        p = e / se
        p[rows, t] -= 1.0
        return ((p * (g / n)).reshape(z.shape),)

    return Tensor.from_op(np.asarray(loss, dtype=z.dtype), (logits,), backward)


def embedding(weight: Tensor, ids) -> Tensor:
    """Row gather ``weight[ids]``; backward scatter-adds into the table."""
    idx = np.asarray(as_array(ids)).astype(np.int64, copy=False)
    w = weight.data
    if idx.size and (idx.min() < 0 or idx.max() >= w.shape[0]):
        raise IndexError(f"embedding id out of range [0, {w.shape[0]})")

    def backward(g):
        gw = np.zeros_like(w)
        np.add.at(gw, idx.reshape(-1), g.reshape(-1, w.shape[1]))
        return (gw,)

    return Tensor.from_op(w[idx], (weight,), backward)


def dropout(x: Tensor, p, rng) -> Tensor:
    """Inverted dropout; identity when ``p`` is 0 or ``rng`` is None."""
    if p <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) * (1.0 / (1.0 - p))
    return Tensor.from_op(x.data * keep, (x,), lambda g: (g * keep,))
