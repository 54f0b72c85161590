"""Minimal SVG line charts; the CSV files remain the authoritative data."""
from __future__ import annotations

from pathlib import Path

import numpy as np

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")
W, H, PAD = 640, 400, 60


def _ticks(lo, hi, n=5):
    return np.linspace(lo, hi, n)


def line_chart(path, series, xlabel="", ylabel="", title="", markers=()) -> Path:
    """``series``: list of ``(label, x, y)``; ``markers``: list of ``(label, x, y)`` drawn as dots."""
    xs = np.concatenate([np.asarray(s[1], float) for s in (*series, *markers)])
    ys = np.concatenate([np.asarray(s[2], float) for s in (*series, *markers)])
    ok = np.isfinite(xs) & np.isfinite(ys)
    x0, x1 = (xs[ok].min(), xs[ok].max()) if ok.any() else (0.0, 1.0)
    y0, y1 = (ys[ok].min(), ys[ok].max()) if ok.any() else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def px(x):
        return PAD + (np.asarray(x, float) - x0) / (x1 - x0) * (W - 2 * PAD)

    def py(y):
        return H - PAD - (np.asarray(y, float) - y0) / (y1 - y0) * (H - 2 * PAD)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" '
           'fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<text x="{px(t):.1f}" y="{H - PAD + 16}" text-anchor="middle">{t:.3g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<text x="{PAD - 6}" y="{py(t) + 4:.1f}" text-anchor="end">{t:.3g}</text>')
    out.append(f'<text x="{W / 2}" y="{H - 15}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="15" y="{H / 2}" text-anchor="middle" '
               f'transform="rotate(-90 15 {H / 2})">{ylabel}</text>')
    out.append(f'<text x="{W / 2}" y="{PAD - 20}" text-anchor="middle">{title}</text>')
    for i, (label, x, y) in enumerate(series):
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px(x), py(y)) if np.isfinite(a) and np.isfinite(b))
        color = _COLORS[i % len(_COLORS)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{W - PAD - 5}" y="{PAD + 15 + 15 * i}" text-anchor="end" '
                   f'fill="{color}">{label}</text>')
    for j, (label, x, y) in enumerate(markers):
        color = _COLORS[(j + len(series)) % len(_COLORS)]
        for a, b in zip(px(x), py(y)):
            if np.isfinite(a) and np.isfinite(b):
                out.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3" fill="{color}"/>')
        out.append(f'<text x="{W - PAD - 5}" y="{PAD + 15 + 15 * (len(series) + j)}" '
                   f'text-anchor="end" fill="{color}">{label}</text>')
    out.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path
