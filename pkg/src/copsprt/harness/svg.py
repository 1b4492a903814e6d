"""Minimal deterministic SVG line plots."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, List, Sequence, Tuple
from xml.sax.saxutils import escape

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]
_DASHES = ["", "6,3", "2,2", "8,3,2,3"]

W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 190, 40, 60


def _ticks(lo: float, hi: float, n: int = 5) -> List[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=mag * 10)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def write_line_plot(path: Path, series: Dict[str, Sequence[Tuple[float, float]]], *, title: str = "",
                    xlabel: str = "", ylabel: str = "", logx: bool = False) -> Path:
    pts = [p for s in series.values() for p in s if math.isfinite(p[1])]
    tx = (lambda x: math.log10(x)) if logx else (lambda x: x)
    if pts:
        xs = [tx(x) for x, _ in pts]
        ys = [y for _, y in pts]
        x0, x1 = min(xs), max(xs)
        y0, y1 = 0.0, max(ys) * 1.1 or 1.0
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def px(x):
        return LEFT + (tx(x) - x0) / (x1 - x0) * pw

    def py(y):
        return TOP + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">{escape(title)}</text>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for yt in _ticks(y0, y1):
        out.append(f'<line x1="{LEFT}" y1="{py(yt):.2f}" x2="{LEFT + pw}" y2="{py(yt):.2f}" stroke="#dddddd"/>')
        out.append(f'<text x="{LEFT - 6}" y="{py(yt) + 4:.2f}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="11">{yt:g}</text>')
    xticks = sorted({x for x, _ in pts}) if logx else _ticks(x0, x1)
    for xt in xticks:
        out.append(f'<line x1="{px(xt):.2f}" y1="{TOP + ph}" x2="{px(xt):.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px(xt):.2f}" y="{TOP + ph + 18}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="11">{xt:g}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{H - 15}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="13">{escape(xlabel)}{" (log scale)" if logx else ""}</text>')
    out.append(f'<text x="18" y="{TOP + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="13" '
               f'transform="rotate(-90 18 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (name, s) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        dash = _DASHES[(i // len(_COLORS)) % len(_DASHES)] or ("6,3" if "product" in name else "")
        good = [(x, y) for x, y in s if math.isfinite(y)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in good)
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        if len(good) > 1:
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"{dash_attr}/>')
        for x, y in good:
            out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{color}"/>')
        ly = TOP + 14 + 18 * i
        lx = LEFT + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" stroke-width="2"{dash_attr}/>')
        out.append(f'<text x="{lx + 30}" y="{ly + 4}" font-family="sans-serif" font-size="11">{escape(name)}</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path
