"""Dependency-free SVG line charts for experiment results."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

from .experiments import X_LABELS, ExperimentResult

__all__ = ["emit_plot", "render_svg"]

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 72, 150, 36, 56
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")
Y_LABEL = "target excess risk"


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return out


def _fmt(v: float) -> str:
    return format(v, ".4g")


def render_svg(result: ExperimentResult, title: str = None) -> str:
    """SVG text: one polyline with point markers and ±1 SE bars per estimator."""
    ests = list(dict.fromkeys(r.estimator for r in result.rows))
    xs = sorted({r.point for r in result.rows})
    lows = [r.mean_risk - r.std_error for r in result.rows]
    highs = [r.mean_risk + r.std_error for r in result.rows]
    x_lo, x_hi = (xs[0], xs[-1]) if xs else (0.0, 1.0)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1.0, x_hi + 1.0
    y_lo, y_hi = (min(lows), max(highs)) if lows else (0.0, 1.0)
    if y_hi == y_lo:
        pad = abs(y_hi) * 0.1 or 1.0
        y_lo, y_hi = y_lo - pad, y_hi + pad
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    pw = WIDTH - LEFT - RIGHT
    ph = HEIGHT - TOP - BOTTOM

    def sx(v):
        return LEFT + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return TOP + (y_hi - v) / (y_hi - y_lo) * ph

    scenario = result.metadata.get("scenario", "")
    x_label = result.metadata.get("x_label") or X_LABELS.get(scenario, "grid value")
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title or scenario:
        out.append(f'<text x="{LEFT + pw / 2:.2f}" y="20" text-anchor="middle" font-size="14">'
                   f'{escape(title or scenario)}</text>')
    out.append(f'<g class="axes" stroke="black" stroke-width="1">'
               f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}"/>'
               f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}"/></g>')
    for t in (xs if len(xs) <= 8 else _ticks(x_lo, x_hi)):
        out.append(f'<line x1="{sx(t):.2f}" y1="{TOP + ph}" x2="{sx(t):.2f}" y2="{TOP + ph + 5}" stroke="black"/>'
                   f'<text x="{sx(t):.2f}" y="{TOP + ph + 18}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(y_lo, y_hi):
        out.append(f'<line x1="{LEFT - 5}" y1="{sy(t):.2f}" x2="{LEFT}" y2="{sy(t):.2f}" stroke="black"/>'
                   f'<text x="{LEFT - 8}" y="{sy(t) + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
    out.append(f'<text class="xlabel" x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 12}" text-anchor="middle">'
               f'{escape(x_label)}</text>')
    out.append(f'<text class="ylabel" x="16" y="{TOP + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.2f})">{Y_LABEL}</text>')
    for k, est in enumerate(ests):
        color = PALETTE[k % len(PALETTE)]
        rows = sorted((r for r in result.rows if r.estimator == est), key=lambda r: r.point)
        pts = " ".join(f"{sx(r.point):.2f},{sy(r.mean_risk):.2f}" for r in rows)
        out.append(f'<g class="series" data-estimator="{escape(est)}">')
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        for r in rows:
            x = sx(r.point)
            a, b = sy(r.mean_risk - r.std_error), sy(r.mean_risk + r.std_error)
            out.append(f'<line class="errorbar" x1="{x:.2f}" y1="{a:.2f}" x2="{x:.2f}" y2="{b:.2f}" '
                       f'stroke="{color}"/>')
            out.append(f'<circle cx="{x:.2f}" cy="{sy(r.mean_risk):.2f}" r="3" fill="{color}"/>')
        out.append("</g>")
        ly = TOP + 10 + 18 * k
        lx = WIDTH - RIGHT + 14
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>'
                   f'<text x="{lx + 26}" y="{ly + 4}">{escape(est)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(result: ExperimentResult, path, title: str = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_svg(result, title))
