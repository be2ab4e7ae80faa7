"""Deterministic SVG 1.1 output.

Coordinates are printed with a fixed number of decimals and elements are
emitted in input order, so identical data gives identical bytes.
"""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

WIDTH = 480
HEIGHT = 480
MARGIN = 36
PALETTE = ("#1f4e79", "#b03a2e", "#1e8449", "#7d3c98", "#b9770e", "#212f3d")


def _f(v: float) -> str:
    return f"{v:.3f}"


class Figure:
    """A single panel mapping a data box to the canvas."""

    def __init__(self, xlim, ylim, title: str = "", width: int = WIDTH, height: int = HEIGHT, equal: bool = False):
        self.width, self.height = width, height
        (x0, x1), (y0, y1) = xlim, ylim
        if equal:
            span = max(x1 - x0, y1 - y0)
            cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
            x0, x1, y0, y1 = cx - span / 2, cx + span / 2, cy - span / 2, cy + span / 2
        self.box = (x0, x1, y0, y1)
        self.items: list[str] = []
        self.title = title
        self.desc = ""

    def _map(self, x, y):
        x0, x1, y0, y1 = self.box
        w = self.width - 2 * MARGIN
        h = self.height - 2 * MARGIN
        px = MARGIN + (np.asarray(x, dtype=float) - x0) / (x1 - x0) * w
        py = self.height - MARGIN - (np.asarray(y, dtype=float) - y0) / (y1 - y0) * h
        return px, py

    def points(self, x, y, color=PALETTE[0], radius: float = 0.6):
        px, py = self._map(x, y)
        dots = "".join(f'<circle cx="{_f(a)}" cy="{_f(b)}" r="{radius:g}"/>' for a, b in zip(px, py))
        self.items.append(f'<g fill="{color}" stroke="none">{dots}</g>')

    def polyline(self, x, y, color=PALETTE[0], width: float = 1.2, label: str | None = None):
        px, py = self._map(x, y)
        pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(px, py) if np.isfinite(a) and np.isfinite(b))
        self.items.append(f'<polyline fill="none" stroke="{color}" stroke-width="{width:g}" points="{pts}"/>')
        if label:
            n = len([i for i in self.items if i.startswith("<text class")])
            self.items.append(f'<text class="legend" x="{self.width - MARGIN - 4}" y="{MARGIN + 14 * (n + 1)}" '
                              f'text-anchor="end" fill="{color}">{escape(label)}</text>')

    def axes(self, xlabel: str = "", ylabel: str = ""):
        x0, x1, y0, y1 = self.box
        px, py = self._map([x0, x1], [y0, y1])
        self.items.append(f'<rect x="{_f(px[0])}" y="{_f(py[1])}" width="{_f(px[1] - px[0])}" '
                          f'height="{_f(py[0] - py[1])}" fill="none" stroke="#555" stroke-width="0.8"/>')
        for v, a in ((x0, "start"), (x1, "end")):
            qx, _ = self._map([v], [y0])
            self.items.append(f'<text x="{_f(qx[0])}" y="{_f(py[0] + 14)}" text-anchor="{a}">{v:.3g}</text>')
        for v in (y0, y1):
            _, qy = self._map([x0], [v])
            self.items.append(f'<text x="{_f(px[0] - 4)}" y="{_f(qy[0] + 4)}" text-anchor="end">{v:.3g}</text>')
        if xlabel:
            self.items.append(f'<text x="{self.width / 2:.1f}" y="{self.height - 6}" text-anchor="middle">'
                              f'{escape(xlabel)}</text>')
        if ylabel:
            self.items.append(f'<text x="12" y="{self.height / 2:.1f}" text-anchor="middle" '
                              f'transform="rotate(-90 12 {self.height / 2:.1f})">{escape(ylabel)}</text>')

    def render(self) -> str:
        head = (f'<?xml version="1.0" encoding="UTF-8"?>\n<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
                f'width="{self.width}" height="{self.height}" viewBox="0 0 {self.width} {self.height}" '
                f'font-family="sans-serif" font-size="11">\n')
        title = (f'<text x="{self.width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(self.title)}'
                 f'</text>\n' if self.title else "")
        desc = f"<desc>{escape(self.desc)}</desc>\n" if self.desc else ""
        return head + desc + title + "\n".join(self.items) + "\n</svg>\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.render(), encoding="utf-8")
        return path


def projection(points, path, title: str = "", max_points: int = 40_000, desc: str = "") -> Path:
    """Orthographic view down the z-axis of a point cloud."""
    pts = np.asarray(points, dtype=float)
    if len(pts) > max_points:
        # deterministic thinning
        pts = pts[np.linspace(0, len(pts) - 1, max_points).astype(int)]
    ext = float(np.max(np.abs(pts[:, :2]))) if len(pts) else 1.0
    ext = ext or 1.0
    fig = Figure((-ext, ext), (-ext, ext), title, equal=True)
    fig.desc = desc
    fig.axes("x", "y")
    fig.points(pts[:, 0], pts[:, 1])
    return fig.save(path)


def line_panels(panels, path, title: str = "", xlabel: str = "", ylabel: str = "", desc: str = "") -> Path:
    """Several curves ``(label, x, y)`` on one set of axes."""
    xs = np.concatenate([np.asarray(p[1], dtype=float) for p in panels])
    ys = np.concatenate([np.asarray(p[2], dtype=float) for p in panels])
    ok = np.isfinite(xs) & np.isfinite(ys)
    x0, x1 = float(xs[ok].min()), float(xs[ok].max())
    y0, y1 = float(ys[ok].min()), float(ys[ok].max())
    pad = 0.05 * (y1 - y0 or 1.0)
    fig = Figure((x0, x1 if x1 > x0 else x0 + 1), (y0 - pad, y1 + pad), title)
    fig.desc = desc
    fig.axes(xlabel, ylabel)
    for i, (label, x, y) in enumerate(panels):
        fig.polyline(x, y, PALETTE[i % len(PALETTE)], label=label)
    return fig.save(path)
