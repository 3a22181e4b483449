"""Minimal self-contained SVG line plots (no external assets, no fonts fetched)."""

import math
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")
WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=20, top=40, bottom=50)


def _decimate(x, y, max_points):
    n = len(x)
    if n <= max_points:
        return x, y
    step = math.ceil(n / max_points)
    idx = np.arange(0, n, step)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return x[idx], y[idx]


def _ticks(lo, hi, count=5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * abs(step):
        out.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return out


def _fmt(v):
    return f"{v:.4g}"


def line_plot(series: Sequence[tuple], title: str, xlabel: str, ylabel: str,
              hlines: Sequence[tuple] = (), max_points: int = 2000) -> str:
    """Render ``series = [(label, x, y), ...]`` as an SVG document string.

    ``hlines`` are ``(label, y)`` pairs drawn dashed across the plot.
    """
    data = []
    for label, x, y in series:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        data.append((label, *_decimate(x, y, max_points)))
    xs = np.concatenate([d[1] for d in data]) if data else np.zeros(1)
    ys = np.concatenate([d[2] for d in data] + [np.array([v for _, v in hlines], dtype=float)])
    x0, x1 = float(np.min(xs)), float(np.max(xs))
    y0, y1 = float(np.min(ys)), float(np.max(ys))
    if x1 == x0:
        x0, x1 = x0 - 1.0, x1 + 1.0
    pad = 0.05 * (y1 - y0) if y1 > y0 else 1.0
    y0, y1 = y0 - pad, y1 + pad

    L, R, T, B = MARGIN["left"], MARGIN["right"], MARGIN["top"], MARGIN["bottom"]
    pw, ph = WIDTH - L - R, HEIGHT - T - B

    def px(v):
        return L + (v - x0) / (x1 - x0) * pw

    def py(v):
        return T + (y1 - v) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{L}" y="{T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for v in _ticks(x0, x1):
        X = px(v)
        out.append(f'<line x1="{X:.2f}" y1="{T + ph}" x2="{X:.2f}" y2="{T + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X:.2f}" y="{T + ph + 18}" text-anchor="middle">{_fmt(v)}</text>')
    for v in _ticks(y0, y1):
        Y = py(v)
        out.append(f'<line x1="{L - 5}" y1="{Y:.2f}" x2="{L}" y2="{Y:.2f}" stroke="black"/>')
        out.append(f'<text x="{L - 8}" y="{Y + 4:.2f}" text-anchor="end">{_fmt(v)}</text>')
    out.append(f'<text x="{L + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{T + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {T + ph / 2:.1f})">{escape(ylabel)}</text>')
    out.append(f'<clipPath id="plot"><rect x="{L}" y="{T}" width="{pw}" height="{ph}"/></clipPath>')
    for label, v in hlines:
        Y = py(v)
        out.append(f'<line x1="{L}" y1="{Y:.2f}" x2="{L + pw}" y2="{Y:.2f}" stroke="gray" '
                   f'stroke-dasharray="6 4"><title>{escape(label)}</title></line>')
    for j, (label, x, y) in enumerate(data):
        color = PALETTE[j % len(PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y) if math.isfinite(b))
        out.append(f'<polyline clip-path="url(#plot)" fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = T + 16 + 16 * j
        out.append(f'<line x1="{L + pw - 110}" y1="{ly - 4}" x2="{L + pw - 90}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{L + pw - 85}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write(path, svg: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)


def trajectory_figures(rec, k_x1: Optional[float]) -> dict:
    """Five standard figures of a run, keyed by file name."""
    t = rec.t
    hl = [("+k_x1", k_x1), ("-k_x1", -k_x1)] if k_x1 is not None else []
    figs = {
        "fig1.svg": line_plot([("x1", t, rec.x[:, 0])], "State x1", "t [s]", "x1", hlines=hl),
        "fig2.svg": line_plot([("x2", t, rec.x[:, 1] if rec.n > 1 else rec.x[:, 0])], "State x2", "t [s]", "x2"),
        "fig3.svg": line_plot([("u", t, rec.u)], "Control input", "t [s]", "u"),
        "fig4.svg": line_plot([(f"z{i + 1}", t, rec.z[:, i]) for i in range(min(rec.n, 2))],
                              "Tracking errors", "t [s]", "z"),
    }
    z2 = rec.z[:, 1] if rec.n > 1 else np.zeros_like(t)
    figs["fig5.svg"] = line_plot([("trajectory", rec.z[:, 0], z2)], "Error phase portrait", "z1", "z2")
    return figs
