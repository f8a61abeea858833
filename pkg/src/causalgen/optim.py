"""AdamW, global-norm clipping and the warmup + cosine learning-rate schedule."""

from __future__ import annotations

import math

import numpy as np

from .errors import TrainingError


def lr_at(it, lr, warmup_iters, lr_decay_iters, min_lr):
    """Linear warmup, cosine decay to ``min_lr``, then constant ``min_lr``."""
    if it < warmup_iters:
        return lr * (it + 1) / (warmup_iters + 1)
    if it > lr_decay_iters:
        return min_lr
    ratio = (it - warmup_iters) / (lr_decay_iters - warmup_iters)
    return min_lr + 0.5 * (lr - min_lr) * (1.0 + math.cos(math.pi * ratio))


def global_grad_norm(params):
    total = 0.0
    for p in params:
        if p.grad is not None:
            g = p.grad.astype(np.float64, copy=False)
            total += float(np.dot(g.ravel(), g.ravel()))
    return math.sqrt(total)


def clip_grad_norm(params, max_norm):
    """Scale all gradients so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    norm = global_grad_norm(params)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= p.grad.dtype.type(scale)
    return norm


class AdamW:
    """Adam with decoupled weight decay, applied to ``decay`` params only."""

    def __init__(self, named_params, decay_names, betas=(0.9, 0.99), eps=1e-8, weight_decay=0.1):
        self.named = list(named_params)
        self.decay_names = set(decay_names)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.named}
        self.v = {n: np.zeros_like(p.data) for n, p in self.named}

    def check_finite(self):
        for name, p in self.named:
            if p.grad is not None and not np.isfinite(p.grad).all():
                raise TrainingError(f"non-finite gradient in parameter {name}")

    def step(self, lr):
        self.check_finite()
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.step_count
        bc2 = 1.0 - b2**self.step_count
        step_size = lr / bc1
        sqrt_bc2 = math.sqrt(bc2)
        for name, p in self.named:
            g = p.grad
            if g is None:
                continue
            t = p.data.dtype.type
            if name in self.decay_names and self.weight_decay:
                p.data *= t(1.0 - lr * self.weight_decay)
            m, v = self.m[name], self.v[name]
            m *= t(b1)
            m += t(1.0 - b1) * g
            v *= t(b2)
            v += t(1.0 - b2) * (g * g)
            denom = np.sqrt(v)
            denom /= t(sqrt_bc2)
            denom += t(self.eps)
            p.data -= t(step_size) * m / denom

    def state_tensors(self):
        """Moment arrays keyed ``opt.m/<name>`` and ``opt.v/<name>``."""
        out = {}
        for name, _ in self.named:
            out[f"opt.m/{name}"] = self.m[name]
            out[f"opt.v/{name}"] = self.v[name]
        return out

    def load_state(self, tensors, step_count):
        for name, p in self.named:
            for kind, store in (("m", self.m), ("v", self.v)):
                arr = tensors.get(f"opt.{kind}/{name}")
                if arr is None or arr.shape != p.shape:
                    raise TrainingError(f"optimizer state for {name} missing or mis-shaped")
                store[name] = np.array(arr, dtype=p.dtype)
        self.step_count = int(step_count)
