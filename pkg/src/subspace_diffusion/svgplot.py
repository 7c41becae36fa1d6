"""Tiny self-contained SVG line charts for sweep outputs."""
from __future__ import annotations

import numpy as np

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]


def line_chart(path, xs, series, xlabel="", ylabel="", title="", logx=True, logy=True,
               width=480, height=320):
    """Write one chart with a polyline per entry of ``series`` (name -> ys).

    Nonpositive values are dropped from log axes.
    """
    pad_l, pad_r, pad_t, pad_b = 60, 20, 30, 45
    xs = np.asarray(xs, dtype=float)
    tx = np.log10 if logx else (lambda v: v)
    ty = np.log10 if logy else (lambda v: v)
    pts = {}
    for name, ys in series.items():
        ys = np.asarray(ys, dtype=float)
        ok = np.isfinite(ys) & np.isfinite(xs)
        if logx:
            ok &= xs > 0
        if logy:
            ok &= ys > 0
        if ok.any():
            pts[name] = (tx(xs[ok]), ty(ys[ok]))
    allx = np.concatenate([p[0] for p in pts.values()]) if pts else np.array([0.0, 1.0])
    ally = np.concatenate([p[1] for p in pts.values()]) if pts else np.array([0.0, 1.0])
    x0, x1 = allx.min(), allx.max()
    y0, y1 = ally.min(), ally.max()
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def sx(v):
        return pad_l + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return pad_t + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{title}</text>',
        f'<text x="{pad_l + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">{xlabel}</text>',
        f'<text x="14" y="{pad_t + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {pad_t + ph / 2:.1f})">{ylabel}</text>',
    ]
    for v, label in ((x0, x0), (x1, x1)):
        shown = 10**label if logx else label
        out.append(f'<text x="{sx(v):.1f}" y="{pad_t + ph + 15}" text-anchor="middle">{shown:.3g}</text>')
    for v in (y0, y1):
        shown = 10**v if logy else v
        out.append(f'<text x="{pad_l - 4}" y="{sy(v) + 4:.1f}" text-anchor="end">{shown:.3g}</text>')
    for k, (name, (px, py)) in enumerate(pts.items()):
        c = _COLORS[k % len(_COLORS)]
        coords = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(px, py))
        out.append(f'<polyline points="{coords}" fill="none" stroke="{c}" stroke-width="1.5"/>')
        for a, b in zip(px, py):
            out.append(f'<circle cx="{sx(a):.1f}" cy="{sy(b):.1f}" r="2.5" fill="{c}"/>')
        out.append(f'<text x="{pad_l + 8}" y="{pad_t + 14 + 14 * k}" fill="{c}">{name}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
    return path
