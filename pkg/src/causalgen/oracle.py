"""Naive per-position reference implementations of every mixer.

Plain Python loops over batch, time and feature; no scan, no vectorization.
Slow by design and meant only for small inputs in tests.
"""

from __future__ import annotations

import math

import numpy as np

from .mixers import MixerKind


def _running_means(seq):
    out, total = [], None
    for t, row in enumerate(seq):
        total = list(row) if total is None else [a + b for a, b in zip(total, row)]
        out.append([s / (t + 1) for s in total])
    return out


def _pair(seq, op):
    out = [list(seq[0])]
    for t in range(1, len(seq)):
        row = []
        for cur, prev in zip(seq[t], seq[t - 1]):
            if op == "max":
                row.append(cur if cur >= prev else prev)
            elif op == "min":
                row.append(cur if cur <= prev else prev)
            else:
                row.append(0.5 * (cur + prev))
        out.append(row)
    return out


def _context(seq, op):
    pair = _pair(seq, op)
    ctx = _running_means(seq)
    pick = max if op == "max" else min
    return [[pick(p, c) for p, c in zip(prow, crow)] for prow, crow in zip(pair, ctx)]


def _matvec(row, w):
    n_in, n_out = w.shape
    return [sum(row[i] * w[i, j] for i in range(n_in)) for j in range(n_out)]


def _attention(seq, w_qkv, n_head):
    d = len(seq[0])
    hd = d // n_head
    qkv = [_matvec(row, w_qkv) for row in seq]
    out = [[0.0] * d for _ in seq]
    for h in range(n_head):
        lo = h * hd
        for t in range(len(seq)):
            q = qkv[t][lo : lo + hd]
            logits = []
            for s in range(t + 1):
                k = qkv[s][d + lo : d + lo + hd]
                logits.append(sum(a * b for a, b in zip(q, k)) / math.sqrt(hd))
            m = max(logits)
            weights = [math.exp(z - m) for z in logits]
            total = sum(weights)
            for j in range(hd):
                out[t][lo + j] = sum(
                    weights[s] / total * qkv[s][2 * d + lo + j] for s in range(t + 1)
                )
    return out


def mixer_oracle(x, kind, params=None):
    """Reference output for ``kind`` on array-like ``x`` of shape [B, T, d]."""
    kind = MixerKind(kind)
    arr = np.asarray(getattr(x, "data", x))
    dtype = arr.dtype if arr.dtype.kind == "f" else np.float64
    rows = []
    for seq in arr.tolist():
        if kind is MixerKind.ATTENTION:
            w = np.asarray(params.w_qkv.data, dtype=np.float64)
            rows.append(_attention(seq, w, params.n_head))
        elif kind is MixerKind.CAUSAL_MAX:
            rows.append(_pair(seq, "max"))
        elif kind is MixerKind.CAUSAL_MIN:
            rows.append(_pair(seq, "min"))
        elif kind is MixerKind.CAUSAL_PAIR_MEAN:
            rows.append(_pair(seq, "mean"))
        elif kind is MixerKind.CAUSAL_MAX_CONTEXT:
            rows.append(_context(seq, "max"))
        else:
            rows.append(_context(seq, "min"))
    return np.asarray(rows, dtype=dtype)


def running_mean_oracle(x):
    """Sequential running mean along axis 1 of a [B, T, d] array."""
    arr = np.asarray(getattr(x, "data", x))
    return np.asarray([_running_means(seq) for seq in arr.tolist()], dtype=arr.dtype)
