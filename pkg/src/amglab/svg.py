"""Minimal SVG 1.1 plotting: scatter and polyline charts with optional log-y axis."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")
WIDTH, HEIGHT = 640, 440
MARGIN = dict(left=70, right=150, top=40, bottom=55)


def _fmt(v):
    return f"{v:.6g}"


def _nice_ticks(lo, hi, count=6):
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(step))
    for m in (1, 2, 2.5, 5, 10):
        if m * mag >= step:
            step = m * mag
            break
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


class Figure:
    """Collects series and renders them to an SVG document.

    Parameters
    ----------
    title, xlabel, ylabel : str
    logy : bool
        Plot ``log10(y)``; non-positive values are dropped.
    """

    def __init__(self, title="", xlabel="", ylabel="", logy=False):
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.logy = logy
        self.series = []

    def scatter(self, x, y, label="", color=None, radius=2.5):
        self.series.append(("scatter", np.asarray(x, float), np.asarray(y, float), label,
                            color, radius))
        return self

    def line(self, x, y, label="", color=None, markers=True):
        self.series.append(("line", np.asarray(x, float), np.asarray(y, float), label,
                            color, 2.5 if markers else 0.0))
        return self

    def _data(self):
        out = []
        for kind, x, y, label, color, r in self.series:
            ok = np.isfinite(x) & np.isfinite(y)
            if self.logy:
                ok &= y > 0
                y = np.where(ok, np.log10(np.where(ok, y, 1.0)), np.nan)
            out.append((kind, x[ok], y[ok], label, color, r))
        return out

    def render(self) -> str:
        data = self._data()
        xs = np.concatenate([d[1] for d in data]) if data else np.zeros(0)
        ys = np.concatenate([d[2] for d in data]) if data else np.zeros(0)
        x0, x1 = (float(xs.min()), float(xs.max())) if xs.size else (0.0, 1.0)
        y0, y1 = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        if self.logy:
            y0, y1 = math.floor(y0), math.ceil(y1)
        padx, pady = 0.04 * (x1 - x0), 0.04 * (y1 - y0)
        x0, x1, y0, y1 = x0 - padx, x1 + padx, y0 - pady, y1 + pady
        L, T = MARGIN["left"], MARGIN["top"]
        W = WIDTH - L - MARGIN["right"]
        H = HEIGHT - T - MARGIN["bottom"]

        def px(v):
            return L + (v - x0) / (x1 - x0) * W

        def py(v):
            return T + (y1 - v) / (y1 - y0) * H

        out = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" '
            f'font-size="11">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<rect x="{L}" y="{T}" width="{W}" height="{H}" fill="none" stroke="black"/>',
            f'<text x="{L + W / 2}" y="{T - 14}" text-anchor="middle" font-size="13">'
            f'{escape(self.title)}</text>',
            f'<text x="{L + W / 2}" y="{HEIGHT - 14}" text-anchor="middle">'
            f'{escape(self.xlabel)}</text>',
            f'<text x="16" y="{T + H / 2}" text-anchor="middle" '
            f'transform="rotate(-90 16 {T + H / 2})">{escape(self.ylabel)}</text>',
        ]
        for t in _nice_ticks(x0, x1):
            out.append(f'<line x1="{_fmt(px(t))}" y1="{T + H}" x2="{_fmt(px(t))}" '
                       f'y2="{T + H + 5}" stroke="black"/>')
            out.append(f'<text x="{_fmt(px(t))}" y="{T + H + 18}" text-anchor="middle">'
                       f'{_fmt(round(t, 10))}</text>')
        yt = (list(range(math.ceil(y0), math.floor(y1) + 1)) if self.logy
              else _nice_ticks(y0, y1))
        for t in yt:
            label = f"1e{t:d}" if self.logy else _fmt(round(t, 10))
            out.append(f'<line x1="{L - 5}" y1="{_fmt(py(t))}" x2="{L}" y2="{_fmt(py(t))}" '
                       f'stroke="black"/>')
            out.append(f'<line x1="{L}" y1="{_fmt(py(t))}" x2="{L + W}" y2="{_fmt(py(t))}" '
                       f'stroke="#dddddd"/>')
            out.append(f'<text x="{L - 8}" y="{_fmt(py(t) + 4)}" text-anchor="end">{label}</text>')
        for k, (kind, x, y, label, color, r) in enumerate(data):
            c = color or PALETTE[k % len(PALETTE)]
            if kind == "line" and x.size > 1:
                pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(x, y))
                out.append(f'<polyline points="{pts}" fill="none" stroke="{c}" '
                           f'stroke-width="1.5"/>')
            if r > 0:
                for a, b in zip(x, y):
                    out.append(f'<circle cx="{_fmt(px(a))}" cy="{_fmt(py(b))}" r="{r}" '
                               f'fill="{c}"/>')
            if label:
                ly = T + 12 + 16 * k
                out.append(f'<rect x="{L + W + 12}" y="{ly - 8}" width="10" height="10" '
                           f'fill="{c}"/>')
                out.append(f'<text x="{L + W + 28}" y="{ly + 1}">{escape(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())
        return path
