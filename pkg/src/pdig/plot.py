"""Minimal log-log line charts written as standalone SVG."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = {"left": 80, "right": 20, "top": 40, "bottom": 60}
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _decades(lo, hi):
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def loglog_svg(path, k, series, ylabel, title=""):
    """Write a log-log chart of each ``series[label]`` against ``k``.

    Non-positive and non-finite values are dropped from each line.
    """
    k = np.asarray(k, dtype=float)
    lines = []
    for label, vals in series.items():
        vals = np.asarray(vals, dtype=float)
        keep = (k > 0) & np.isfinite(vals) & (vals > 0)
        if keep.any():
            lines.append((label, np.log10(k[keep]), np.log10(vals[keep])))
    if lines:
        xlo = min(l[1].min() for l in lines)
        xhi = max(l[1].max() for l in lines)
        ylo = min(l[2].min() for l in lines)
        yhi = max(l[2].max() for l in lines)
    else:
        xlo, xhi, ylo, yhi = 0.0, 1.0, 0.0, 1.0
    xlo, xhi = math.floor(xlo), max(math.ceil(xhi), math.floor(xlo) + 1)
    ylo, yhi = math.floor(ylo), max(math.ceil(yhi), math.floor(ylo) + 1)
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(v):
        return MARGIN["left"] + (v - xlo) / (xhi - xlo) * pw

    def sy(v):
        return MARGIN["top"] + (yhi - v) / (yhi - ylo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for d in _decades(xlo, xhi):
        x = sx(d)
        out.append(f'<line x1="{x:.2f}" y1="{MARGIN["top"]}" x2="{x:.2f}" y2="{MARGIN["top"] + ph}" stroke="#ddd"/>')
        out.append(f'<text x="{x:.2f}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle">1e{d}</text>')
    for d in _decades(ylo, yhi):
        y = sy(d)
        out.append(f'<line x1="{MARGIN["left"]}" y1="{y:.2f}" x2="{MARGIN["left"] + pw}" y2="{y:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{MARGIN["left"] - 8}" y="{y + 4:.2f}" text-anchor="end">1e{d}</text>')
    for idx, (label, lx, ly) in enumerate(lines):
        color = COLORS[idx % len(COLORS)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(lx, ly))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(
            f'<text x="{MARGIN["left"] + pw - 10}" y="{MARGIN["top"] + 18 + 16 * idx}" text-anchor="end" fill="{color}">{escape(label)}</text>'
        )
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.2f}" y="{HEIGHT - 15}" text-anchor="middle">k (epoch)</text>')
    out.append(
        f'<text x="18" y="{MARGIN["top"] + ph / 2:.2f}" text-anchor="middle" transform="rotate(-90 18 {MARGIN["top"] + ph / 2:.2f})">{escape(ylabel)}</text>'
    )
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
