"""Minimal SVG line plots (polyline + axes); no plotting dependency.

CSV is the canonical output everywhere, these files are a convenience view.
"""

from __future__ import annotations

import math

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 70, 20, 30, 50


def _ticks(lo: float, hi: float, n: int = 6):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / max(n - 1, 1)))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= n:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-12 * span:
        out.append(round(t, 12))
        t += step
    return out


def line_plot(
    path,
    x,
    series,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    log_x: bool = False,
    y_range: tuple[float, float] | None = None,
) -> None:
    """Write an SVG plot of one or more named series over a shared x axis.

    `series` is a list of (label, values, dashed) triples.
    """
    xs = [math.log10(v) for v in x] if log_x else list(x)
    all_y = [v for _, ys, _ in series for v in ys]
    ylo, yhi = (min(all_y), max(all_y)) if y_range is None else y_range
    if yhi - ylo < 1e-12:
        yhi = ylo + 1.0
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad
    xlo, xhi = min(xs), max(xs)
    if xhi - xlo < 1e-12:
        xhi = xlo + 1.0

    def px(v):
        return _ML + (v - xlo) / (xhi - xlo) * (_W - _ML - _MR)

    def py(v):
        return _H - _MB - (v - ylo) / (yhi - ylo) * (_H - _MT - _MB)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
    ]
    # axes
    parts.append(
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>'
    )
    parts.append(f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>')
    for t in _ticks(xlo, xhi):
        xp = px(t)
        label = f"1e{t:g}" if log_x else f"{t:g}"
        parts.append(f'<line x1="{xp}" y1="{_H - _MB}" x2="{xp}" y2="{_H - _MB + 5}" stroke="black"/>')
        parts.append(f'<text x="{xp}" y="{_H - _MB + 18}" text-anchor="middle">{label}</text>')
    for t in _ticks(ylo, yhi):
        yp = py(t)
        parts.append(f'<line x1="{_ML - 5}" y1="{yp}" x2="{_ML}" y2="{yp}" stroke="black"/>')
        parts.append(f'<text x="{_ML - 8}" y="{yp + 4}" text-anchor="end">{t:g}</text>')
    parts.append(
        f'<text x="{(_ML + _W - _MR) / 2}" y="{_H - 12}" text-anchor="middle">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{(_MT + _H - _MB) / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(_MT + _H - _MB) / 2})">{ylabel}</text>'
    )

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"]
    for i, (label, ys, dashed) in enumerate(series):
        color = colors[i % len(colors)]
        pts = " ".join(f"{px(xv):.2f},{py(yv):.2f}" for xv, yv in zip(xs, ys))
        dash = ' stroke-dasharray="5,4"' if dashed else ""
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        parts.append(
            f'<text x="{_W - _MR - 5}" y="{_MT + 16 * (i + 1)}" text-anchor="end" '
            f'fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
