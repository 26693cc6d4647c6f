"""Minimal deterministic SVG line plots."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 80, 20, 30, 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _num(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, k: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    raw = (hi - lo) / k
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * abs(hi) + 1e-300:
        out.append(round(v, 12))
        v += step
    return out


def _label(v: float) -> str:
    return f"{v:.6g}"


def line_plot(series: dict[str, list[tuple[float, float]]], xlabel: str, ylabel: str, title: str = "") -> str:
    """SVG text with one polyline per series (in the given order)."""
    pts = [p for s in series.values() for p in s]
    if not pts:
        raise ValueError("nothing to plot")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x0 == x1:
        x0, x1 = x0 - 1, x1 + 1
    if y0 == y1:
        y0, y1 = y0 - 1, y1 + 1
    pw = WIDTH - LEFT - RIGHT
    ph = HEIGHT - TOP - BOTTOM

    def sx(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return TOP + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<g stroke="black" stroke-width="1"><line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}"/>'
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}"/></g>',
    ]
    out.append('<g font-family="sans-serif" font-size="11" fill="black">')
    for t in _ticks(x0, x1):
        out.append(f'<text x="{_num(sx(t))}" y="{TOP + ph + 16}" text-anchor="middle">{_label(t)}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<text x="{LEFT - 6}" y="{_num(sy(t) + 4)}" text-anchor="end">{_label(t)}</text>')
    out.append("</g>")
    out.append(
        f'<text class="xlabel" x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 20}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{escape(xlabel)}</text>'
    )
    out.append(
        f'<text class="ylabel" x="20" y="{TOP + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="13" transform="rotate(-90 20 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    if title:
        out.append(
            f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-family="sans-serif" '
            f'font-size="14">{escape(title)}</text>'
        )
    for k, (name, s) in enumerate(series.items()):
        coords = " ".join(f"{_num(sx(x))},{_num(sy(y))}" for x, y in s)
        color = COLORS[k % len(COLORS)]
        out.append(
            f'<polyline data-series="{escape(name)}" fill="none" stroke="{color}" '
            f'stroke-width="1.5" points="{coords}"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
