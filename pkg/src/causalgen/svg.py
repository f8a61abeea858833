"""Minimal self-contained SVG line charts (loss curves, scaling plots)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

from .errors import DataError
from .training import LossLog

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#7f7f7f", "#bcbd22"]


@dataclass
class Series:
    label: str
    xs: list
    ys: list


@dataclass
class PlotSpec:
    inputs: list  # (csv path, label) pairs
    out: str
    split: str = "val"
    title: str = ""
    x_range: tuple | None = None
    y_range: tuple | None = None


def _nice_step(span, target=6):
    raw = span / max(target, 1)
    mag = 10 ** math.floor(math.log10(raw))
    for m in (1, 2, 2.5, 5, 10):
        if raw <= m * mag:
            return m * mag
    return 10 * mag


def _linear_ticks(lo, hi):
    step = _nice_step(hi - lo)
    start = math.ceil(lo / step - 1e-9) * step
    ticks, v = [], start
    while v <= hi + step * 1e-9:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _log_ticks(lo, hi):
    base = 2 if hi / lo < 1e3 else 10
    k = math.floor(math.log(lo, base) + 1e-9)
    ticks = []
    while base**k <= hi * (1 + 1e-9):
        if base**k >= lo * (1 - 1e-9):
            ticks.append(float(base**k))
        k += 1
    return ticks


def _fmt(v):
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.0e}"
    return f"{v:g}"


def line_chart(series, title="", x_label="", y_label="", log_x=False, log_y=False,
               x_range=None, y_range=None, width=760, height=460):
    """Render ``series`` as an SVG document string."""
    if not series:
        raise DataError("nothing to plot")
    left, right, top, bottom = 70, 190, 40, 55
    pw, ph = width - left - right, height - top - bottom
    xs = [x for s in series for x in s.xs]
    ys = [y for s in series for y in s.ys]
    x_lo, x_hi = x_range or (min(xs), max(xs))
    y_lo, y_hi = y_range or (min(ys), max(ys))
    if x_hi == x_lo:
        x_hi = x_lo + 1
    if y_hi == y_lo:
        y_hi = y_lo + 1
    if not y_range and not log_y:
        pad = 0.05 * (y_hi - y_lo)
        y_lo, y_hi = y_lo - pad, y_hi + pad

    fx = (lambda v: math.log(v)) if log_x else (lambda v: v)
    fy = (lambda v: math.log(v)) if log_y else (lambda v: v)

    def px(v):
        return left + (fx(v) - fx(x_lo)) / (fx(x_hi) - fx(x_lo)) * pw

    def py(v):
        return top + ph - (fy(v) - fy(y_lo)) / (fy(y_hi) - fy(y_lo)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{left + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')

    for t in (_log_ticks(x_lo, x_hi) if log_x else _linear_ticks(x_lo, x_hi)):
        x = px(t)
        out.append(f'<line x1="{x:.1f}" y1="{top + ph}" x2="{x:.1f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.1f}" y="{top + ph + 18}" text-anchor="middle">{_fmt(t)}</text>')
    for t in (_log_ticks(y_lo, y_hi) if log_y else _linear_ticks(y_lo, y_hi)):
        y = py(t)
        out.append(f'<line x1="{left - 5}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="black"/>')
        out.append(f'<line x1="{left}" y1="{y:.1f}" x2="{left + pw}" y2="{y:.1f}" stroke="#dddddd"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.1f}" text-anchor="end">{_fmt(t)}</text>')
    if x_label:
        out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{escape(x_label)}</text>')
    if y_label:
        out.append(
            f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(y_label)}</text>'
        )

    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(s.xs, s.ys))
        out.append(
            f'<polyline data-label="{escape(s.label, {chr(34): "&quot;"})}" points="{pts}" '
            f'fill="none" stroke="{color}" stroke-width="1.8"/>'
        )
        ly = top + 14 + 18 * i
        lx = left + pw + 14
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text class="legend" x="{lx + 28}" y="{ly}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def plot_loss_curves(spec: PlotSpec):
    """One polyline per (CSV, split) pair; returns the SVG text it wrote."""
    series = []
    for path, label in spec.inputs:
        try:
            rows = LossLog.read_csv(path).split(spec.split)
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"{path}: cannot read loss log: {exc}") from None
        if not rows:
            raise DataError(f"{path}: no '{spec.split}' rows to plot")
        series.append(Series(label, [r.iter for r in rows], [r.loss for r in rows]))
    svg = line_chart(
        series,
        title=spec.title or f"{spec.split} loss",
        x_label="iteration",
        y_label=f"{spec.split} loss",
        x_range=spec.x_range,
        y_range=spec.y_range,
    )
    write_svg(spec.out, svg)
    return svg
