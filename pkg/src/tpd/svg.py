"""Minimal SVG charts for explanations: stacked bars, grouped bars, a line."""

from __future__ import annotations

import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = {
    "failure": "#d62728",
    "dropoff": "#2ca02c",
    "pickup": "#1f77b4",
    "refuel": "#ff7f0e",
    "traffic": "#9467bd",
    "move": "#8c564b",
    "terminated": "#bbbbbb",
    "terminated/unknown": "#bbbbbb",
}
_FALLBACK = ("#17becf", "#bcbd22", "#e377c2", "#7f7f7f")

WIDTH, HEIGHT = 720, 360
LEFT, RIGHT, TOP, BOTTOM = 64, 150, 36, 44


def _color(name: str, i: int) -> str:
    return PALETTE.get(name, _FALLBACK[i % len(_FALLBACK)])


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.floor(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


class _Frame:
    def __init__(self, title: str, ylabel: str, horizon: int, lo: float, hi: float):
        self.ticks = _nice_ticks(lo, hi)
        self.lo, self.hi = min(self.ticks[0], lo), max(self.ticks[-1], hi)
        self.horizon = horizon
        self.pw = WIDTH - LEFT - RIGHT
        self.ph = HEIGHT - TOP - BOTTOM
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
            '<rect width="100%" height="100%" fill="white"/>',
            f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
            f'<text transform="translate(14,{TOP + self.ph / 2:.1f}) rotate(-90)" '
            f'text-anchor="middle">{escape(ylabel)}</text>',
            f'<text x="{LEFT + self.pw / 2:.1f}" y="{HEIGHT - 8}" text-anchor="middle">step</text>',
        ]
        for t in self.ticks:
            y = self.y(t)
            self.parts.append(f'<line x1="{LEFT}" x2="{LEFT + self.pw}" y1="{y:.2f}" y2="{y:.2f}" '
                              f'stroke="#e5e5e5"/>')
            self.parts.append(f'<text x="{LEFT - 6}" y="{y + 4:.2f}" text-anchor="end">{t:g}</text>')
        every = max(1, int(math.ceil(horizon / 15)))
        for h in range(0, horizon, every):
            self.parts.append(f'<text x="{self.xc(h):.2f}" y="{TOP + self.ph + 16}" '
                              f'text-anchor="middle">{h}</text>')

    def y(self, v: float) -> float:
        return TOP + self.ph * (self.hi - v) / (self.hi - self.lo)

    def slot(self) -> float:
        return self.pw / self.horizon

    def xc(self, h: int) -> float:
        return LEFT + self.slot() * (h + 0.5)

    def rect(self, x, y0, y1, w, color, tip):
        top, bot = min(y0, y1), max(y0, y1)
        self.parts.append(f'<rect x="{x:.2f}" y="{top:.2f}" width="{w:.2f}" height="{bot - top:.2f}" '
                          f'fill="{color}"><title>{escape(tip)}</title></rect>')

    def legend(self, names: Sequence[str], colors: Sequence[str]):
        x = WIDTH - RIGHT + 14
        for i, (n, c) in enumerate(zip(names, colors)):
            y = TOP + 16 * i
            self.parts.append(f'<rect x="{x}" y="{y}" width="10" height="10" fill="{c}"/>')
            self.parts.append(f'<text x="{x + 15}" y="{y + 9}">{escape(n)}</text>')

    def close(self) -> str:
        self.parts.append(f'<line x1="{LEFT}" x2="{LEFT + self.pw}" y1="{self.y(0):.2f}" '
                          f'y2="{self.y(0):.2f}" stroke="#333"/>')
        self.parts.append(f'<line x1="{LEFT}" x2="{LEFT}" y1="{TOP}" y2="{TOP + self.ph}" stroke="#333"/>')
        self.parts.append("</svg>")
        return "\n".join(self.parts) + "\n"


def stacked_bar_chart(series: Mapping[str, Sequence[float]], title: str,
                      ylabel: str = "probability") -> str:
    """One bar per step with the series stacked; values are assumed nonnegative."""
    names = list(series)
    data = np.array([np.asarray(series[n], dtype=float) for n in names])
    H = data.shape[1]
    top = max(1.0, float(data.clip(min=0).sum(axis=0).max(initial=0.0)))
    f = _Frame(title, ylabel, H, 0.0, top)
    colors = [_color(n, i) for i, n in enumerate(names)]
    w = f.slot() * 0.8
    for h in range(H):
        base = 0.0
        for i, n in enumerate(names):
            v = max(float(data[i, h]), 0.0)
            if v > 0:
                f.rect(f.xc(h) - w / 2, f.y(base), f.y(base + v), w, colors[i], f"{n} @ {h}: {v:.4g}")
            base += v
    f.legend(names, colors)
    return f.close()


def grouped_bar_chart(series: Mapping[str, Sequence[float]], title: str,
                      ylabel: str = "expected reward") -> str:
    """Side-by-side bars per step; negative values hang below the axis."""
    names = list(series)
    data = np.array([np.asarray(series[n], dtype=float) for n in names])
    H = data.shape[1]
    f = _Frame(title, ylabel, H, min(0.0, float(data.min())), max(0.0, float(data.max())))
    colors = [_color(n, i) for i, n in enumerate(names)]
    w = f.slot() * 0.85 / max(len(names), 1)
    for h in range(H):
        x0 = f.xc(h) - w * len(names) / 2
        for i, n in enumerate(names):
            v = float(data[i, h])
            if v != 0:
                f.rect(x0 + i * w, f.y(0.0), f.y(v), w, colors[i], f"{n} @ {h}: {v:.4g}")
    f.legend(names, colors)
    return f.close()


def line_chart(values: Sequence[float], title: str, ylabel: str = "expected return difference",
               label: str = "difference") -> str:
    v = np.asarray(values, dtype=float)
    f = _Frame(title, ylabel, len(v), min(0.0, float(v.min())), max(0.0, float(v.max())))
    pts = " ".join(f"{f.xc(h):.2f},{f.y(x):.2f}" for h, x in enumerate(v))
    f.parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="2"/>')
    for h, x in enumerate(v):
        f.parts.append(f'<circle cx="{f.xc(h):.2f}" cy="{f.y(x):.2f}" r="2.5" fill="#1f77b4">'
                       f'<title>{h}: {x:.4g}</title></circle>')
    f.legend([label], ["#1f77b4"])
    return f.close()
