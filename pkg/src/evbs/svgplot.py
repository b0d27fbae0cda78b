"""Minimal hand-rolled SVG charts for the diagnostic reports.

These are diagnostics, not publication graphics: fixed-size canvases, plain
axes with tick labels, points, polylines, bands and reference lines. Output
carries no timestamps, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

WIDTH, HEIGHT = 640, 440
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 66, 18, 40, 52


def _esc(s: str) -> str:
    return (str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))


def _nice_ticks(lo: float, hi: float, target: int = 6):
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return [0.0, 1.0]
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(target - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        step = mult * mag
        if step >= raw:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks or [lo, hi]


def _fmt(v: float) -> str:
    if v == int(v) and abs(v) < 1e7:
        return str(int(v))
    return f"{v:.4g}"


class Chart:
    """Fixed-layout chart canvas with data-space drawing primitives."""

    def __init__(self, xlim, ylim, title: str, xlabel: str, ylabel: str):
        self.xlim = xlim
        self.ylim = ylim
        self.parts = []
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel

    def _sx(self, x: float) -> float:
        x0, x1 = self.xlim
        frac = (x - x0) / (x1 - x0)
        return MARGIN_L + frac * (WIDTH - MARGIN_L - MARGIN_R)

    def _sy(self, y: float) -> float:
        y0, y1 = self.ylim
        frac = (y - y0) / (y1 - y0)
        return HEIGHT - MARGIN_B - frac * (HEIGHT - MARGIN_T - MARGIN_B)

    def points(self, xs, ys, r: float = 2.6, fill: str = "#1f6fb2",
               opacity: float = 0.85):
        for x, y in zip(xs, ys):
            self.parts.append(
                f'<circle cx="{self._sx(x):.2f}" cy="{self._sy(y):.2f}" '
                f'r="{r}" fill="{fill}" fill-opacity="{opacity}"/>'
            )

    def line(self, xs, ys, stroke: str = "#c23b21", width: float = 1.8,
             dash: Optional[str] = None):
        pts = " ".join(f"{self._sx(x):.2f},{self._sy(y):.2f}" for x, y in zip(xs, ys))
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
            f'stroke-width="{width}"{d}/>'
        )

    def band(self, xs, lower, upper, fill: str = "#9ecbe8", opacity: float = 0.5):
        fwd = [f"{self._sx(x):.2f},{self._sy(y):.2f}" for x, y in zip(xs, upper)]
        back = [f"{self._sx(x):.2f},{self._sy(y):.2f}"
                for x, y in zip(reversed(list(xs)), reversed(list(lower)))]
        self.parts.append(
            f'<polygon points="{" ".join(fwd + back)}" fill="{fill}" '
            f'fill-opacity="{opacity}" stroke="none"/>'
        )

    def hline(self, y: float, stroke: str = "#444444", dash: str = "5,4"):
        self.line([self.xlim[0], self.xlim[1]], [y, y], stroke=stroke,
                  width=1.2, dash=dash)

    def stems(self, xs, ys, stroke: str = "#1f6fb2"):
        base = max(self.ylim[0], 0.0) if self.ylim[0] <= 0 <= self.ylim[1] else self.ylim[0]
        for x, y in zip(xs, ys):
            self.parts.append(
                f'<line x1="{self._sx(x):.2f}" y1="{self._sy(base):.2f}" '
                f'x2="{self._sx(x):.2f}" y2="{self._sy(y):.2f}" '
                f'stroke="{stroke}" stroke-width="1.4"/>'
            )

    def annotate(self, x: float, y: float, text: str, fill: str = "#c23b21"):
        self.parts.append(
            f'<text x="{self._sx(x) + 4:.2f}" y="{self._sy(y) - 4:.2f}" '
            f'font-size="11" fill="{fill}">{_esc(text)}</text>'
        )

    def render(self) -> str:
        x0, x1 = self.xlim
        y0, y1 = self.ylim
        ax = []
        left, right = MARGIN_L, WIDTH - MARGIN_R
        top, bottom = MARGIN_T, HEIGHT - MARGIN_B
        ax.append(f'<rect x="{left}" y="{top}" width="{right-left}" '
                  f'height="{bottom-top}" fill="none" stroke="#222" stroke-width="1"/>')
        for t in _nice_ticks(x0, x1):
            if not x0 <= t <= x1:
                continue
            sx = self._sx(t)
            ax.append(f'<line x1="{sx:.2f}" y1="{bottom}" x2="{sx:.2f}" '
                      f'y2="{bottom+5}" stroke="#222"/>')
            ax.append(f'<text x="{sx:.2f}" y="{bottom+18}" font-size="11" '
                      f'text-anchor="middle">{_fmt(t)}</text>')
        for t in _nice_ticks(y0, y1):
            if not y0 <= t <= y1:
                continue
            sy = self._sy(t)
            ax.append(f'<line x1="{left-5}" y1="{sy:.2f}" x2="{left}" '
                      f'y2="{sy:.2f}" stroke="#222"/>')
            ax.append(f'<text x="{left-8}" y="{sy+4:.2f}" font-size="11" '
                      f'text-anchor="end">{_fmt(t)}</text>')
        ax.append(f'<text x="{(left+right)/2}" y="{HEIGHT-14}" font-size="13" '
                  f'text-anchor="middle">{_esc(self.xlabel)}</text>')
        ax.append(f'<text x="18" y="{(top+bottom)/2}" font-size="13" '
                  f'text-anchor="middle" transform="rotate(-90 18 {(top+bottom)/2})">'
                  f'{_esc(self.ylabel)}</text>')
        ax.append(f'<text x="{(left+right)/2}" y="24" font-size="14" '
                  f'text-anchor="middle" font-weight="bold">{_esc(self.title)}</text>')
        body = "\n".join(ax + self.parts)
        return (
            f'<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">\n'
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>\n'
            f"{body}\n</svg>\n"
        )


def _pad_lim(values, frac: float = 0.06):
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        lo, hi = lo - 1.0, hi + 1.0
    pad = frac * (hi - lo)
    return lo - pad, hi + pad


def save(path, chart: Chart):
    Path(path).write_text(chart.render(), encoding="utf-8")


def scatter_with_curve(path, x, y, curve_x=None, curve_y=None, title="",
                       xlabel="x", ylabel="y", highlight=()):
    ch = Chart(_pad_lim(x), _pad_lim(y), title, xlabel, ylabel)
    ch.points(x, y)
    if curve_x is not None:
        ch.line(curve_x, curve_y)
    for i in highlight:
        ch.annotate(x[i - 1], y[i - 1], f"#{i}")
        ch.points([x[i - 1]], [y[i - 1]], r=4.0, fill="#c23b21", opacity=1.0)
    save(path, ch)


def index_plot(path, values, hline=None, title="", ylabel="value",
               highlight=(), stems=False):
    values = np.asarray(values, dtype=float)
    n = values.size
    idx = np.arange(1, n + 1)
    lims = list(_pad_lim(values))
    if hline is not None:
        lims[0] = min(lims[0], hline - 0.05 * abs(hline) - 1e-12)
        lims[1] = max(lims[1], hline + 0.05 * abs(hline) + 1e-12)
    ch = Chart((0, n + 1), tuple(lims), title, "observation", ylabel)
    if stems:
        ch.stems(idx, values)
    ch.points(idx, values)
    if hline is not None:
        ch.hline(hline)
    for i in highlight:
        ch.annotate(i, values[i - 1], f"#{i}")
        ch.points([i], [values[i - 1]], r=4.0, fill="#c23b21", opacity=1.0)
    save(path, ch)


def qq_envelope_plot(path, theoretical, observed_sorted, lower, median, upper,
                     title="", xlabel="normal quantile", ylabel="sorted residual"):
    allv = np.concatenate([observed_sorted, lower, upper])
    ch = Chart(_pad_lim(theoretical), _pad_lim(allv), title, xlabel, ylabel)
    ch.band(theoretical, lower, upper)
    ch.line(theoretical, median, stroke="#444444", width=1.0, dash="4,3")
    ch.points(theoretical, observed_sorted)
    save(path, ch)


def acf_plot(path, values, band, title="", ylabel="autocorrelation"):
    values = np.asarray(values, dtype=float)
    lags = np.arange(values.size)
    lo = min(float(values.min()), -band) - 0.08
    hi = max(1.0, band) + 0.08
    ch = Chart((-0.5, values.size - 0.5), (lo, hi), title, "lag", ylabel)
    ch.hline(band, stroke="#c23b21")
    ch.hline(-band, stroke="#c23b21")
    ch.hline(0.0, stroke="#222222", dash="1,0")
    ch.stems(lags, values)
    save(path, ch)
