"""Minimal SVG line plots, enough to eyeball emitted data without a plotting stack."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def line_plot(path, x, series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
              width: int = 640, height: int = 400, markers: bool = False) -> None:
    """Write ``series`` (name -> y array, sharing ``x``) as an SVG polyline plot."""
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    finite = np.concatenate([v[np.isfinite(v)] for v in ys.values()]) if ys else np.zeros(1)
    y0, y1 = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if y1 == y0:
        y1 = y0 + 1.0
    x0, x1 = float(x.min()), float(x.max())
    if x1 == x0:
        x1 = x0 + 1.0
    ml, mr, mt, mb = 60, 20, 30, 45
    pw, ph = width - ml - mr, height - mt - mb

    def px(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def py(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>',
           f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
           f'<text x="{ml + pw / 2}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>',
           f'<text x="14" y="{mt + ph / 2}" text-anchor="middle" '
           f'transform="rotate(-90 14 {mt + ph / 2})">{escape(ylabel)}</text>']
    for t in np.linspace(x0, x1, 5):
        out.append(f'<text x="{px(t):.1f}" y="{mt + ph + 15}" text-anchor="middle">{t:.4g}</text>')
    for t in np.linspace(y0, y1, 5):
        out.append(f'<text x="{ml - 5}" y="{py(t) + 4:.1f}" text-anchor="end">{t:.4g}</text>')
    for n, (name, y) in enumerate(ys.items()):
        color = _COLORS[n % len(_COLORS)]
        ok = np.isfinite(y)
        pts = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x[ok], y[ok]))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        if markers:
            out.extend(f'<circle cx="{px(a):.1f}" cy="{py(b):.1f}" r="2.5" fill="{color}"/>'
                       for a, b in zip(x[ok], y[ok]))
        out.append(f'<text x="{ml + 8}" y="{mt + 14 + 13 * n}" fill="{color}">{escape(name)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
