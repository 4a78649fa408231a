"""Self-contained SVG figures: line panels, gray heatmaps, kernel grids."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

COLORS = {"x": "#1f77b4", "w": "#d62728", "s": "#2ca02c", "alpha": "#17becf", "r": "#9467bd", "xhat": "#d62728"}


class Svg:
    def __init__(self, width: float, height: float):
        self.width = width
        self.height = height
        self.parts: list[str] = []

    def rect(self, x, y, w, h, fill, extra=""):
        self.parts.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" fill="{fill}" {extra}/>')

    def polyline(self, pts, stroke, width=1.0, opacity=1.0):
        coords = " ".join(f"{px:.2f},{py:.2f}" for px, py in pts)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{stroke}" '
            f'stroke-width="{width}" stroke-opacity="{opacity}"/>'
        )

    def line(self, x1, y1, x2, y2, stroke, width=1.0):
        self.parts.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" stroke="{stroke}" stroke-width="{width}"/>')

    def circle(self, cx, cy, r, fill):
        self.parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{r}" fill="{fill}"/>')

    def text(self, x, y, s, size=11, anchor="start"):
        self.parts.append(
            f'<text x="{x:.2f}" y="{y:.2f}" font-family="sans-serif" font-size="{size}" '
            f'text-anchor="{anchor}">{escape(str(s))}</text>'
        )

    def render(self) -> str:
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{self.width:.0f}" '
            f'height="{self.height:.0f}" viewBox="0 0 {self.width:.0f} {self.height:.0f}">'
        )
        return "\n".join([head, f'<rect width="100%" height="100%" fill="white"/>', *self.parts, "</svg>"]) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.render())


def _scale(lo, hi, a, b):
    if hi == lo:
        hi, lo = lo + 1.0, lo - 1.0
    return lambda v: a + (v - lo) * (b - a) / (hi - lo)


def line_panel(svg: Svg, x0, y0, w, h, series: Sequence[tuple], title: str = "", stems=None):
    """Draw ``series`` = [(values, color, opacity), ...] into one box.

    ``stems`` (values, color) draws a lollipop marker at each nonzero.
    """
    allv = np.concatenate([np.asarray(v, dtype=float).ravel() for v, *_ in series] + (
        [np.asarray(stems[0], dtype=float)] if stems is not None else []))
    lo, hi = float(np.min(allv)), float(np.max(allv))
    n = max(len(series[0][0]), 2)
    fx = _scale(0, n - 1, x0 + 4, x0 + w - 4)
    fy = _scale(lo, hi, y0 + h - 4, y0 + 14)
    svg.rect(x0, y0, w, h, "none", 'stroke="#999"')
    if title:
        svg.text(x0 + 4, y0 + 11, title, size=10)
    if lo < 0 < hi:
        svg.line(x0, fy(0), x0 + w, fy(0), "#ccc", 0.5)
    for vals, color, opacity in series:
        vals = np.asarray(vals, dtype=float)
        svg.polyline([(fx(i), fy(v)) for i, v in enumerate(vals)], color, 1.0, opacity)
    if stems is not None:
        vals, color = stems
        for i in np.flatnonzero(vals):
            svg.line(fx(i), fy(0.0 if lo <= 0 <= hi else lo), fx(i), fy(vals[i]), color, 0.8)
            svg.circle(fx(i), fy(vals[i]), 1.8, "#1f3fb4")


def heat_panel(svg: Svg, x0, y0, size, arr, title: str = "", diverging: bool = False):
    arr = np.asarray(arr, dtype=float)
    rows, cols = arr.shape
    cell = size / max(rows, cols)
    amax = float(np.max(np.abs(arr))) or 1.0
    lo, hi = float(arr.min()), float(arr.max())
    if title:
        svg.text(x0, y0 - 3, title, size=10)
    for i in range(rows):
        for j in range(cols):
            v = arr[i, j]
            if diverging:
                t = int(255 * (1 - min(abs(v) / amax, 1.0)))
                fill = f"rgb(255,{t},{t})" if v >= 0 else f"rgb({t},{t},255)"
            else:
                g = int(255 * (v - lo) / (hi - lo)) if hi > lo else 0
                fill = f"rgb({g},{g},{g})"
            svg.rect(x0 + j * cell, y0 + i * cell, cell + 0.05, cell + 0.05, fill)


def reconstruction_figure(x, trace, path) -> None:
    """Stacked panels: input, per-kernel s / alpha / r, and xhat over x."""
    x = np.asarray(x, dtype=float)
    q = len(trace.s)
    if x.ndim == 1:
        pw, ph = 640, 90
        svg = Svg(pw + 20, (2 + 3 * q) * (ph + 8) + 10)
        y = 10.0
        line_panel(svg, 10, y, pw, ph, [(x, COLORS["x"], 1.0)], "x")
        y += ph + 8
        for i in range(q):
            line_panel(svg, 10, y, pw, ph, [(trace.s[i], COLORS["s"], 1.0)], f"s[{i}]")
            y += ph + 8
            line_panel(svg, 10, y, pw, ph, [(trace.s[i], COLORS["s"], 0.25)], f"alpha[{i}]",
                       stems=(trace.alpha[i], COLORS["alpha"]))
            y += ph + 8
            line_panel(svg, 10, y, pw, ph, [(trace.r[i], COLORS["r"], 1.0)], f"r[{i}]")
            y += ph + 8
        line_panel(svg, 10, y, pw, ph, [(x, COLORS["x"], 0.3), (trace.xhat, COLORS["xhat"], 1.0)], "xhat")
        svg.save(path)
        return
    size, gap = 120, 24
    cols = 2 + 3 * q
    svg = Svg(cols * (size + gap) + gap, size + 2 * gap)
    panels = [("x", x, False)]
    for i in range(q):
        panels += [(f"s[{i}]", trace.s[i], True), (f"alpha[{i}]", trace.alpha[i], True), (f"r[{i}]", trace.r[i], True)]
    panels.append(("xhat", trace.xhat, False))
    for k, (title, arr, div) in enumerate(panels):
        heat_panel(svg, gap + k * (size + gap), gap, size, arr, title, diverging=div)
    svg.save(path)


def kernel_grid(kernels: Sequence[np.ndarray], path, titles: Sequence[str] | None = None, cols: int = 4) -> None:
    """One cell per kernel: line plot for 1D, diverging heatmap for 2D."""
    n = len(kernels)
    cols = min(cols, n)
    rows = -(-n // cols)
    cw, chh, gap = 160, 110, 16
    svg = Svg(cols * (cw + gap) + gap, rows * (chh + gap) + gap)
    for k, w in enumerate(kernels):
        r, c = divmod(k, cols)
        x0, y0 = gap + c * (cw + gap), gap + r * (chh + gap)
        title = titles[k] if titles else f"w[{k}] m={w.shape[0]}"
        svg.rect(x0, y0, cw, chh, "#fffbe6")
        w = np.asarray(w, dtype=float)
        if w.ndim == 1:
            line_panel(svg, x0, y0, cw, chh, [(w, COLORS["w"], 1.0)], title)
        else:
            side = min(cw, chh - 16)
            heat_panel(svg, x0 + (cw - side) / 2, y0 + 14, side, w, title, diverging=True)
    svg.save(path)
