"""Central finite-difference checks against autodiff gradients.

Autodiff runs in float64.  The finite-difference reference is evaluated in
extended precision (``np.longdouble``) by default: in plain float64 the
difference quotient carries about eps*|f|/h ~ 1e-10 of round-off, which
swamps the relative error of any coordinate whose true gradient happens
to be near 1e-7.  Pass ``extended=False`` for a float64 reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .mixers import recording_routes
from .tensor import Tensor, no_grad


def relative_error(a, b):
    """Elementwise |a - b| / max(|a|, |b|, 1e-8)."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def _require_f64(arr):
    if arr.dtype != np.float64:
        raise ContractError(f"gradient checks need 64-bit data, got {arr.dtype}")


def _scalar(t):
    return t.data.reshape(-1)[0]


def _probe(fn):
    with recording_routes() as routes:
        value = _scalar(fn())
    return value, routes


@dataclass
class GradReport:
    max_error: float
    checked: int
    skipped_kinks: int  # +h and -h evaluations took different max/min branches


def _central(fn, flat, i, h, skip_kinks):
    """(derivative estimate, straddles_kink) for coordinate ``i`` of ``flat``."""
    old = flat[i]
    flat[i] = old + h
    fp, routes_p = _probe(fn)
    up = flat[i]
    flat[i] = old - h
    fm, routes_m = _probe(fn)
    down = flat[i]
    flat[i] = old
    return float((fp - fm) / (up - down)), skip_kinks and routes_p != routes_m


def _report(analytic, numeric, skipped):
    err = float(relative_error(analytic, numeric).max()) if numeric else 0.0
    return GradReport(err, len(numeric), skipped)


def grad_report(f, x, h=1e-5, coords=None, skip_kinks=True, extended=True):
    """Compare autodiff and central differences of scalar ``f`` at ``x``.

    ``coords`` optionally restricts the comparison to some flat indices.
    With ``skip_kinks`` a coordinate is left out (and counted) when the two
    perturbed evaluations route any max/min differently: a central
    difference across a tie does not estimate the derivative on either side.
    """
    base = np.array(x.data if isinstance(x, Tensor) else x)
    if base.dtype.kind in "iub":
        base = base.astype(np.float64)
    _require_f64(base)
    xt = Tensor(base.copy(), requires_grad=True)
    f(xt).backward()
    grad = xt.grad.reshape(-1)

    ref = base.astype(np.longdouble) if extended else base.copy()
    flat = ref.reshape(-1)
    analytic, numeric, skipped = [], [], 0
    with no_grad():
        for i in range(base.size) if coords is None else coords:
            est, kink = _central(lambda: f(Tensor(ref)), flat, i, h, skip_kinks)
            if kink:
                skipped += 1
                continue
            analytic.append(grad[i])
            numeric.append(est)
    return _report(analytic, numeric, skipped)


def grad_check(f, x, h=1e-5, coords=None, skip_kinks=True, extended=True):
    """Max relative error of :func:`grad_report`."""
    return grad_report(f, x, h, coords, skip_kinks, extended).max_error


def param_grad_report(loss_fn, params, h=1e-5, coords=None, skip_kinks=True, extended=True):
    """Finite-difference check over a list of parameter tensors.

    ``loss_fn()`` must rebuild the loss from the current parameter values.
    ``coords`` is an optional list of ``(param_index, flat_index)`` pairs;
    by default every coordinate of every parameter is checked.  Parameter
    values and dtypes are restored before returning.
    """
    for p in params:
        _require_f64(p.data)
        p.grad = None
    loss_fn().backward()
    grads = [np.zeros_like(p.data) if p.grad is None else p.grad for p in params]
    for p in params:
        p.grad = None

    if coords is None:
        coords = [(k, i) for k, p in enumerate(params) for i in range(p.size)]
    saved = [p.data for p in params]
    if extended:
        for p in params:
            p.data = p.data.astype(np.longdouble)
    analytic, numeric, skipped = [], [], 0
    try:
        with no_grad():
            for k, i in coords:
                est, kink = _central(loss_fn, params[k].data.reshape(-1), i, h, skip_kinks)
                if kink:
                    skipped += 1
                    continue
                analytic.append(grads[k].reshape(-1)[i])
                numeric.append(est)
    finally:
        for p, data in zip(params, saved):
            p.data = data
    return _report(analytic, numeric, skipped)


def check_param_grads(loss_fn, params, h=1e-5, coords=None, skip_kinks=True, extended=True):
    """Max relative error of :func:`param_grad_report`."""
    return param_grad_report(loss_fn, params, h, coords, skip_kinks, extended).max_error
