"""Minimal static SVG line plots.

A deliberately small polyline writer so runs produce figures without any
plotting dependency.  Linear axes with an optional log10 y scale, a handful
of ticks, and a text legend.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import EmptyTrajectory, IoFailure

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2"]
_LOG_FLOOR = 1e-16


def _ticks(lo: float, hi: float, n: int = 5) -> list:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + 1e-9 * step:
        out.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return out


def write_svg(path: str, series: list, title: str = "", xlabel: str = "t",
              ylabel: str = "", logy: bool = False, width: int = 720,
              height: int = 460) -> None:
    """Write labelled (label, x, y) series as one SVG figure.

    With logy, y values are clipped below at 1e-16 before taking log10 so
    exactly-zero samples stay plottable.
    """
    if not series:
        raise EmptyTrajectory("no series to plot")
    ml, mr, mt, mb = 70, 20, 40, 50  # margins
    pw, ph = width - ml - mr, height - mt - mb

    prepared = []
    for label, x, y in series:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if logy:
            y = np.log10(np.maximum(np.abs(y), _LOG_FLOOR))
        keep = np.isfinite(x) & np.isfinite(y)
        prepared.append((label, x[keep], y[keep]))
    xs = np.concatenate([p[1] for p in prepared])
    ys = np.concatenate([p[2] for p in prepared])
    if xs.size == 0:
        raise EmptyTrajectory("all points non-finite")
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad

    def px(v):
        return ml + (v - x_lo) / (x_hi - x_lo) * pw

    def py(v):
        return mt + ph - (v - y_lo) / (y_hi - y_lo) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" '
        f'font-size="15" font-family="sans-serif">{title}</text>',
    ]
    # axes
    parts.append(f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" '
                 f'y2="{mt + ph}" stroke="black"/>')
    parts.append(f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" '
                 f'stroke="black"/>')
    for tv in _ticks(x_lo, x_hi):
        X = px(tv)
        parts.append(f'<line x1="{X:.1f}" y1="{mt + ph}" x2="{X:.1f}" '
                     f'y2="{mt + ph + 5}" stroke="black"/>')
        parts.append(f'<text x="{X:.1f}" y="{mt + ph + 18}" '
                     f'text-anchor="middle" font-size="11" '
                     f'font-family="sans-serif">{tv:g}</text>')
    for tv in _ticks(y_lo, y_hi):
        Y = py(tv)
        label = f"1e{tv:g}" if logy else f"{tv:g}"
        parts.append(f'<line x1="{ml - 5}" y1="{Y:.1f}" x2="{ml}" '
                     f'y2="{Y:.1f}" stroke="black"/>')
        parts.append(f'<text x="{ml - 8}" y="{Y + 4:.1f}" text-anchor="end" '
                     f'font-size="11" font-family="sans-serif">{label}</text>')
    parts.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 12}" '
                 f'text-anchor="middle" font-size="13" '
                 f'font-family="sans-serif">{xlabel}</text>')
    ytext = f"log10 {ylabel}" if logy else ylabel
    parts.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
                 f'font-size="13" font-family="sans-serif" '
                 f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{ytext}</text>')

    for idx, (label, x, y) in enumerate(prepared):
        color = _PALETTE[idx % len(_PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="1.3"/>')
        ly = mt + 14 + 15 * idx
        parts.append(f'<line x1="{ml + pw - 120}" y1="{ly - 4}" '
                     f'x2="{ml + pw - 100}" y2="{ly - 4}" stroke="{color}" '
                     f'stroke-width="2"/>')
        parts.append(f'<text x="{ml + pw - 95}" y="{ly}" font-size="11" '
                     f'font-family="sans-serif">{label}</text>')
    parts.append("</svg>")
    try:
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(parts) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
