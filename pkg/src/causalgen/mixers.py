"""Causal sequence mixers: multi-head attention and parameter-free replacements.

All mixers take a ``[B, T, d]`` tensor and return a ``[B, T, d]`` tensor in
which row ``t`` depends only on input rows ``0..t``.  The parameter-free
mixers work on the full embedding width; heads only exist for attention.
"""

from __future__ import annotations

import contextlib
import enum
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .functional import causal_mask, softmax_lastdim
from .tensor import Tensor, sqrt_scale


class MixerKind(str, enum.Enum):
    ATTENTION = "attention"
    CAUSAL_MAX = "causal_max"
    CAUSAL_MIN = "causal_min"
    CAUSAL_PAIR_MEAN = "causal_pair_mean"
    CAUSAL_MAX_CONTEXT = "causal_max_context"
    CAUSAL_MIN_CONTEXT = "causal_min_context"

    @property
    def parameter_free(self):
        return self is not MixerKind.ATTENTION

    def __str__(self):
        return self.value


@dataclass
class AttentionParams:
    w_qkv: Tensor
    w_proj: Tensor
    n_head: int


# -- op counting -------------------------------------------------------

_counters = []


@contextlib.contextmanager
def counting_ops():
    """Collect elementwise operation counts issued by mixers in this block.

    Yields a Counter keyed by ``comparisons``, ``scan_additions``,
    ``divisions``, ``multiply_adds`` and ``exponentials``.
    """
    counts = Counter()
    _counters.append(counts)
    try:
        yield counts
    finally:
        _counters.remove(counts)


def _tally(key, n):
    for c in _counters:
        c[key] += int(n)


_route_logs = []


@contextlib.contextmanager
def recording_routes():
    """Collect the winner masks chosen by max/min mixers in this block.

    Two evaluations took the same branches of every max/min iff their
    recorded masks are equal; gradient checks use this to spot finite
    differences that straddle a tie.
    """
    log = []
    _route_logs.append(log)
    try:
        yield log
    finally:
        _route_logs.remove(log)


def _record(*masks):
    for log in _route_logs:
        log.extend(np.packbits(m).tobytes() for m in masks)


# -- prefix scan -------------------------------------------------------


def inclusive_scan(a, count=True):
    """Hillis-Steele inclusive prefix sum along axis 1.

    ceil(log2 T) rounds; round ``k`` adds the value ``2**k`` positions back.
    Every round is one vectorized add, so the depth is logarithmic in T.
    """
    s = a
    n_t = a.shape[1]
    per_pos = a.size // n_t
    step = 1
    while step < n_t:
        s = np.concatenate([s[:, :step], s[:, step:] + s[:, :-step]], axis=1)
        if count:
            _tally("scan_additions", (n_t - step) * per_pos)
        step *= 2
    if s is a:
        s = a.copy()
    return s


def _positions(n_t, dtype):
    return np.arange(1, n_t + 1, dtype=dtype).reshape(1, n_t, 1)


def causal_prefix_mean(x: Tensor) -> Tensor:
    """Running mean c_t = (x_0 + ... + x_t) / (t + 1) over the time axis."""
    a = x.data
    n_t = a.shape[1]
    denom = _positions(n_t, a.dtype)
    c = inclusive_scan(a) / denom
    _tally("divisions", a.size)

    def backward(g):
        # grad x_s = sum_{t >= s} g_t / (t + 1): a reversed scan
        return (inclusive_scan((g / denom)[:, ::-1], count=False)[:, ::-1].copy(),)

    return Tensor.from_op(c, (x,), backward)


# -- pairwise mixers ---------------------------------------------------


def _pair_winner(cur, prev, op):
    # ties go to the current token
    return cur >= prev if op == "max" else cur <= prev


def causal_pair(x: Tensor, op="max") -> Tensor:
    """y_0 = x_0; y_t = op(x_t, x_{t-1}) elementwise for op in max/min/mean."""
    if op not in ("max", "min", "mean"):
        raise ValueError(f"unknown pair op {op!r}")
    a = x.data
    cur, prev = a[:, 1:], a[:, :-1]
    if op == "mean":
        rest = 0.5 * (cur + prev)
        _tally("additions", cur.size)
        win = None
    else:
        win = _pair_winner(cur, prev, op)
        rest = np.where(win, cur, prev)
        _tally("comparisons", cur.size)
        _record(win)
    y = np.concatenate([a[:, :1], rest], axis=1)

    def backward(g):
        gx = np.zeros_like(g)
        gx[:, 0] = g[:, 0]
        tail = g[:, 1:]
        if win is None:
            gx[:, 1:] += 0.5 * tail
            gx[:, :-1] += 0.5 * tail
        else:
            gx[:, 1:] += np.where(win, tail, 0)
            gx[:, :-1] += np.where(win, 0, tail)
        return (gx,)

    return Tensor.from_op(y, (x,), backward)


def causal_context_mix(x: Tensor, op="max") -> Tensor:
    """y_t = op(x_t, x_{t-1}, c_t) with c the causal prefix mean of x.

    At t = 0 there is no predecessor and c_0 = x_0, so y_0 = x_0.
    Gradient goes to the winning candidate; ties prefer the current token,
    then the predecessor, then the context vector.
    """
    if op not in ("max", "min"):
        raise ValueError(f"unknown context op {op!r}")
    ctx = causal_prefix_mean(x)
    a, c = x.data, ctx.data
    cur, prev = a[:, 1:], a[:, :-1]
    win_cur = _pair_winner(cur, prev, op)
    pair = np.concatenate([a[:, :1], np.where(win_cur, cur, prev)], axis=1)
    win_pair = pair >= c if op == "max" else pair <= c
    y = np.where(win_pair, pair, c)
    _tally("comparisons", cur.size + a.size)
    _record(win_cur, win_pair)

    def backward(g):
        gp = np.where(win_pair, g, 0)
        gc = g - gp
        gx = np.zeros_like(g)
        gx[:, 0] = gp[:, 0]
        tail = gp[:, 1:]
        gx[:, 1:] += np.where(win_cur, tail, 0)
        gx[:, :-1] += np.where(win_cur, 0, tail)
        return gx, gc

    return Tensor.from_op(y, (x, ctx), backward)


# -- attention ---------------------------------------------------------


def attention(x: Tensor, p: AttentionParams) -> Tensor:
    """Causal multi-head self-attention without the output projection."""
    n_b, n_t, d = x.shape
    h = p.n_head
    if h <= 0 or d % h:
        raise ConfigError(f"embedding width {d} is not divisible by n_head={h}")
    hd = d // h
    qkv = x @ p.w_qkv

    def heads(part):
        return part.reshape(n_b, n_t, h, hd).transpose(0, 2, 1, 3)

    q, k, v = heads(qkv[..., :d]), heads(qkv[..., d : 2 * d]), heads(qkv[..., 2 * d :])
    scores = (q @ k.swapaxes(-1, -2)) * sqrt_scale(hd)
    weights = softmax_lastdim(scores, causal_mask(n_t))
    y = (weights @ v).transpose(0, 2, 1, 3).reshape(n_b, n_t, d)

    _tally("multiply_adds", n_b * (3 * n_t * d * d + 2 * n_t * n_t * d))
    _tally("exponentials", n_b * h * n_t * n_t)
    return y


def apply_mixer(kind, x: Tensor, params: AttentionParams | None = None) -> Tensor:
    kind = MixerKind(kind)
    if kind is MixerKind.ATTENTION:
        if params is None:
            raise ConfigError("attention mixer needs AttentionParams")
        return attention(x, params)
    if kind is MixerKind.CAUSAL_MAX:
        return causal_pair(x, "max")
    if kind is MixerKind.CAUSAL_MIN:
        return causal_pair(x, "min")
    if kind is MixerKind.CAUSAL_PAIR_MEAN:
        return causal_pair(x, "mean")
    if kind is MixerKind.CAUSAL_MAX_CONTEXT:
        return causal_context_mix(x, "max")
    return causal_context_mix(x, "min")
