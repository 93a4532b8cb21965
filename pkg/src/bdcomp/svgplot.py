"""Minimal SVG emission for line plots and heat maps.

Output is plain markup built from ``polyline``, ``rect``, ``line`` and
``text`` elements, so plots can be written without a display or a plotting
library.  Numbers are printed with a fixed number of significant digits,
which keeps the files byte-identical across runs.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=20, top=36, bottom=52)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2")


def _fmt(x):
    return f"{x:.6g}"


def _nice_ticks(lo, hi, n=5):
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for m in (1, 2, 2.5, 5, 10):
        if (hi - lo) / (m * step) <= n:
            step *= m
            break
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


def _range(vals, pad=0.05):
    vals = np.asarray([v for v in vals if np.isfinite(v)], dtype=float)
    if vals.size == 0:
        return 0.0, 1.0
    lo, hi = float(vals.min()), float(vals.max())
    if hi == lo:
        d = abs(lo) * 0.1 or 1.0
        return lo - d, hi + d
    d = (hi - lo) * pad
    return lo - d, hi + d


class Figure:
    """A single set of axes.  Add series, then call :meth:`to_svg` or :meth:`save`."""

    def __init__(self, title="", xlabel="", ylabel="", width=WIDTH, height=HEIGHT):
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.width, self.height = width, height
        self.series = []
        self.heat = None
        self.xlim = self.ylim = None

    def line(self, x, y, label=None, color=None, markers=False, dashed=False):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != y.shape:
            raise ValueError("x and y must have the same shape")
        color = color or PALETTE[len(self.series) % len(PALETTE)]
        self.series.append(dict(x=x, y=y, label=label, color=color, markers=markers, dashed=dashed))
        return self

    def heatmap(self, z, x_extent, y_extent, max_cells=(200, 120)):
        """``z[i, j]`` is drawn at row ``i`` (y) and column ``j`` (x), downsampled by block means."""
        z = np.asarray(z, dtype=float)
        ny, nx = z.shape
        fy, fx = max(1, math.ceil(ny / max_cells[1])), max(1, math.ceil(nx / max_cells[0]))
        z = z[: ny - ny % fy or ny, : nx - nx % fx or nx]
        z = z.reshape(z.shape[0] // fy, fy, z.shape[1] // fx, fx).mean(axis=(1, 3))
        self.heat = (z, tuple(map(float, x_extent)), tuple(map(float, y_extent)))
        self.xlim, self.ylim = self.heat[1], self.heat[2]
        return self

    # -- layout ---------------------------------------------------------------

    def _limits(self):
        if self.xlim is None:
            self.xlim = _range(np.concatenate([s["x"] for s in self.series]), 0.0) if self.series else (0, 1)
        if self.ylim is None:
            self.ylim = _range(np.concatenate([s["y"] for s in self.series])) if self.series else (0, 1)

    def _box(self):
        m = MARGIN
        return m["left"], m["top"], self.width - m["left"] - m["right"], self.height - m["top"] - m["bottom"]

    def _map(self, x, y):
        x0, y0, w, h = self._box()
        (xa, xb), (ya, yb) = self.xlim, self.ylim
        px = x0 + (np.asarray(x) - xa) / (xb - xa) * w
        py = y0 + h - (np.asarray(y) - ya) / (yb - ya) * h
        return px, py

    def to_svg(self):
        self._limits()
        x0, y0, w, h = self._box()
        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
               f'viewBox="0 0 {self.width} {self.height}" font-family="sans-serif" font-size="12">',
               f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="white"/>']
        if self.heat is not None:
            out += self._heat_markup()
        out.append(f'<clipPath id="plot"><rect x="{x0}" y="{y0}" width="{w}" height="{h}"/></clipPath>')
        for s in self.series:
            good = np.isfinite(s["x"]) & np.isfinite(s["y"])
            px, py = self._map(s["x"][good], s["y"][good])
            pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px, py))
            dash = ' stroke-dasharray="6,3"' if s["dashed"] else ""
            out.append(f'<polyline clip-path="url(#plot)" fill="none" stroke="{s["color"]}" '
                       f'stroke-width="1.5"{dash} points="{pts}"/>')
            if s["markers"]:
                for a, b in zip(px, py):
                    out.append(f'<rect x="{_fmt(a - 2.5)}" y="{_fmt(b - 2.5)}" width="5" height="5" '
                               f'fill="{s["color"]}"/>')
        out += self._axes_markup()
        out += self._legend_markup()
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def _heat_markup(self):
        z, (xa, xb), (ya, yb) = self.heat
        ny, nx = z.shape
        lo, hi = float(np.nanmin(z)), float(np.nanmax(z))
        span = hi - lo or 1.0
        out = []
        dx, dy = (xb - xa) / nx, (yb - ya) / ny
        for i in range(ny):
            for j in range(nx):
                px, py = self._map([xa + j * dx, xa + (j + 1) * dx], [ya + (i + 1) * dy, ya + i * dy])
                out.append(f'<rect x="{_fmt(px[0])}" y="{_fmt(py[0])}" width="{_fmt(px[1] - px[0])}" '
                           f'height="{_fmt(py[1] - py[0])}" fill="{_colour((z[i, j] - lo) / span)}"/>')
        out.append(f'<text x="{self.width - MARGIN["right"]}" y="{MARGIN["top"] - 8}" text-anchor="end">'
                   f'range [{_fmt(lo)}, {_fmt(hi)}]</text>')
        return out

    def _axes_markup(self):
        x0, y0, w, h = self._box()
        out = [f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="black"/>']
        for t in _nice_ticks(*self.xlim):
            px, _ = self._map(t, self.ylim[0])
            out.append(f'<line x1="{_fmt(px)}" y1="{y0 + h}" x2="{_fmt(px)}" y2="{y0 + h + 5}" stroke="black"/>')
            out.append(f'<text x="{_fmt(px)}" y="{y0 + h + 18}" text-anchor="middle">{_fmt(t)}</text>')
        for t in _nice_ticks(*self.ylim):
            _, py = self._map(self.xlim[0], t)
            out.append(f'<line x1="{x0 - 5}" y1="{_fmt(py)}" x2="{x0}" y2="{_fmt(py)}" stroke="black"/>')
            out.append(f'<text x="{x0 - 8}" y="{_fmt(py + 4)}" text-anchor="end">{_fmt(t)}</text>')
        if self.title:
            out.append(f'<text x="{self.width / 2:g}" y="20" text-anchor="middle" font-size="14">'
                       f'{escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{x0 + w / 2:g}" y="{self.height - 12}" text-anchor="middle">'
                       f'{escape(self.xlabel)}</text>')
        if self.ylabel:
            out.append(f'<text x="16" y="{y0 + h / 2:g}" text-anchor="middle" '
                       f'transform="rotate(-90 16 {y0 + h / 2:g})">{escape(self.ylabel)}</text>')
        return out

    def _legend_markup(self):
        labelled = [s for s in self.series if s["label"]]
        x0, y0, w, _ = self._box()
        out = []
        for i, s in enumerate(labelled):
            y = y0 + 14 + 16 * i
            xr = x0 + w - 150
            out.append(f'<line x1="{xr}" y1="{y - 4}" x2="{xr + 20}" y2="{y - 4}" stroke="{s["color"]}" '
                       f'stroke-width="2"/>')
            out.append(f'<text x="{xr + 26}" y="{y}">{escape(str(s["label"]))}</text>')
        return out

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_svg())
        return path


def _colour(t):
    # blue -> white -> red
    t = min(1.0, max(0.0, float(t))) if math.isfinite(t) else 0.5
    if t < 0.5:
        a = t / 0.5
        r, g, b = 49 + a * (255 - 49), 54 + a * (255 - 54), 149 + a * (255 - 149)
    else:
        a = (t - 0.5) / 0.5
        r, g, b = 255 - a * (255 - 165), 255 - a * 255, 255 - a * (255 - 38)
    return f"#{int(round(r)):02x}{int(round(g)):02x}{int(round(b)):02x}"


def line_plot(path, x, ys, labels=None, title="", xlabel="", ylabel="", markers=False):
    """Convenience wrapper: one or more series against a shared ``x``."""
    fig = Figure(title, xlabel, ylabel)
    ys = [ys] if np.ndim(ys[0]) == 0 else ys
    labels = labels or [None] * len(ys)
    for y, lab in zip(ys, labels):
        fig.line(x, y, lab, markers=markers)
    return fig.save(path)


def heatmap_plot(path, z, x_extent, y_extent, title="", xlabel="", ylabel=""):
    return Figure(title, xlabel, ylabel).heatmap(z, x_extent, y_extent).save(path)
