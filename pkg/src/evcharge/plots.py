"""Static SVG figures written directly as XML text."""
from __future__ import annotations

import math
from html import escape
from typing import Sequence

import numpy as np

from .metrics import ECDF, pdf_estimate

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"]
STATE_COLORS = {"charge": "#2ca02c", "handshake": "#ff7f0e", "idle": "#d9d9d9"}


def nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 10))
        v += step
    return ticks


def _fmt_tick(v: float) -> str:
    if abs(v) >= 1000 or v == int(v):
        return f"{v:.0f}"
    return f"{v:g}"


class Figure:
    """A single plot area with linear axes."""

    def __init__(self, width=720, height=420, title="", xlabel="", ylabel="",
                 margin=(60, 30, 50, 70)):
        self.w, self.h = width, height
        self.top, self.right, self.bottom, self.left = margin
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.parts: list[str] = []
        self.legend: list[tuple[str, str, str]] = []
        self.extra: list[str] = []
        self.x0 = self.x1 = self.y0 = self.y1 = None

    # coordinate transforms
    def set_limits(self, x0, x1, y0, y1):
        if x1 <= x0:
            x1 = x0 + 1
        if y1 <= y0:
            y1 = y0 + 1
        self.x0, self.x1, self.y0, self.y1 = x0, x1, y0, y1

    def px(self, x):
        return self.left + (x - self.x0) / (self.x1 - self.x0) * (self.w - self.left - self.right)

    def py(self, y):
        return self.h - self.bottom - (y - self.y0) / (self.y1 - self.y0) * (self.h - self.top - self.bottom)

    # primitives
    def polyline(self, xs, ys, color, width=1.5, dash=None, label=None):
        pts = " ".join(f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in zip(xs, ys))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"{extra}/>'
        )
        if label:
            self.legend.append((label, color, dash or ""))

    def step(self, xs, ys, color, **kw):
        sx, sy = [], []
        for k, (x, y) in enumerate(zip(xs, ys)):
            if k:
                sx.append(x)
                sy.append(sy[-1])
            sx.append(x)
            sy.append(y)
        self.polyline(sx, sy, color, **kw)

    def rect(self, x0, y0, x1, y1, fill, stroke="none", opacity=1.0):
        a, b = sorted((self.px(x0), self.px(x1)))
        c, d = sorted((self.py(y0), self.py(y1)))
        self.parts.append(
            f'<rect x="{a:.2f}" y="{c:.2f}" width="{b - a:.2f}" height="{d - c:.2f}" '
            f'fill="{fill}" stroke="{stroke}" fill-opacity="{opacity}"/>'
        )

    def line(self, x0, y0, x1, y1, color, width=1.0):
        self.parts.append(
            f'<line x1="{self.px(x0):.2f}" y1="{self.py(y0):.2f}" x2="{self.px(x1):.2f}" '
            f'y2="{self.py(y1):.2f}" stroke="{color}" stroke-width="{width}"/>'
        )

    def text(self, x, y, s, size=11, anchor="start", raw=False, color="#000"):
        X, Y = (x, y) if raw else (self.px(x), self.py(y))
        self.parts.append(
            f'<text x="{X:.2f}" y="{Y:.2f}" font-size="{size}" text-anchor="{anchor}" '
            f'fill="{color}" font-family="sans-serif">{escape(str(s))}</text>'
        )

    def _axes(self, xticks=None, yticks=None, ytick_labels=None):
        out = []
        L, R = self.left, self.w - self.right
        T, B = self.top, self.h - self.bottom
        out.append(f'<rect x="{L}" y="{T}" width="{R - L}" height="{B - T}" fill="none" stroke="#333"/>')
        for v in xticks if xticks is not None else nice_ticks(self.x0, self.x1):
            x = self.px(v)
            out.append(f'<line x1="{x:.2f}" y1="{B}" x2="{x:.2f}" y2="{B + 4}" stroke="#333"/>')
            out.append(f'<text x="{x:.2f}" y="{B + 16}" font-size="10" text-anchor="middle" '
                       f'font-family="sans-serif">{escape(_fmt_tick(v))}</text>')
        yt = yticks if yticks is not None else nice_ticks(self.y0, self.y1)
        for k, v in enumerate(yt):
            y = self.py(v)
            label = ytick_labels[k] if ytick_labels else _fmt_tick(v)
            out.append(f'<line x1="{L - 4}" y1="{y:.2f}" x2="{L}" y2="{y:.2f}" stroke="#333"/>')
            out.append(f'<text x="{L - 6}" y="{y + 3:.2f}" font-size="10" text-anchor="end" '
                       f'font-family="sans-serif">{escape(label)}</text>')
        out.append(f'<text x="{(L + R) / 2:.1f}" y="{self.h - 12}" font-size="12" '
                   f'text-anchor="middle" font-family="sans-serif">{escape(self.xlabel)}</text>')
        out.append(f'<text x="16" y="{(T + B) / 2:.1f}" font-size="12" text-anchor="middle" '
                   f'font-family="sans-serif" transform="rotate(-90 16 {(T + B) / 2:.1f})">'
                   f'{escape(self.ylabel)}</text>')
        out.append(f'<text x="{self.w / 2:.1f}" y="{T - 24}" font-size="14" text-anchor="middle" '
                   f'font-family="sans-serif">{escape(self.title)}</text>')
        return out

    def _legend(self):
        out = []
        x = self.left + 10
        y = self.top + 14
        for label, color, dash in self.legend:
            extra = f' stroke-dasharray="{dash}"' if dash else ""
            out.append(f'<line x1="{x}" y1="{y - 4}" x2="{x + 22}" y2="{y - 4}" stroke="{color}" '
                       f'stroke-width="2"{extra}/>')
            out.append(f'<text x="{x + 28}" y="{y}" font-size="10" font-family="sans-serif">'
                       f'{escape(label)}</text>')
            y += 14
        return out

    def render(self, xticks=None, yticks=None, ytick_labels=None) -> str:
        head = (f'<?xml version="1.0" encoding="UTF-8"?>\n'
                f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
                f'viewBox="0 0 {self.w} {self.h}">\n<rect width="100%" height="100%" fill="white"/>\n')
        body = self.parts + self._axes(xticks, yticks, ytick_labels) + self._legend() + self.extra
        return head + "\n".join(body) + "\n</svg>\n"

    def save(self, path, **kw) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render(**kw))


# -- figure builders --------------------------------------------------------------

def cdf_figure(series: dict[str, Sequence[float]], title: str) -> Figure:
    """ECDF curves, one per label; empty sample sets are left out."""
    fig = Figure(title=title, xlabel="TTR (min)", ylabel="P(TTR <= t)")
    data = {k: ECDF(v) for k, v in series.items() if len(v)}
    lo = min(e.x[0] for e in data.values()) / 60
    hi = max(e.x[-1] for e in data.values()) / 60
    pad = 0.05 * (hi - lo or 1.0)
    fig.set_limits(max(0.0, lo - pad), hi + pad, 0, 1)
    for k, (label, e) in enumerate(data.items()):
        xs, fs = e.steps()
        px = [fig.x0 * 60] + list(xs) + [fig.x1 * 60]
        py = [0.0] + list(fs) + [1.0]
        fig.step([x / 60 for x in px], py, PALETTE[k % len(PALETTE)],
                 dash="5,3" if "SHRD" in label else None, label=label)
    return fig


def density_figure(series: dict[str, Sequence[float]], title: str, points: int = 200) -> Figure:
    fig = Figure(title=title, xlabel="TTR (min)", ylabel="density (1/min)")
    data = {k: np.asarray(v) / 60 for k, v in series.items() if len(v)}
    lo = min(v.min() for v in data.values())
    hi = max(v.max() for v in data.values())
    pad = 0.1 * (hi - lo or 1.0)
    grid = np.linspace(max(0.0, lo - pad), hi + pad, points)
    curves = {k: pdf_estimate(v, grid, bandwidth=None if np.ptp(v) > 0 else max(pad / 10, 0.05))
              for k, v in data.items()}
    top = max(float(c.max()) for c in curves.values())
    fig.set_limits(grid[0], grid[-1], 0, top * 1.05)
    for k, (label, c) in enumerate(curves.items()):
        fig.polyline(grid, c, PALETTE[k % len(PALETTE)],
                     dash="5,3" if "SHRD" in label else None, label=label)
    return fig


def utilization_figure(bands: list[tuple[str, float, float, float]], title: str) -> Figure:
    """Horizontal stacked bars of charge / handshake / idle shares in percent."""
    n = len(bands)
    fig = Figure(width=720, height=80 + 28 * n, title=title, xlabel="time share (%)", ylabel="",
                 margin=(60, 30, 50, 110))
    fig.set_limits(0, 100, 0, n)
    for k, (label, c, h, i) in enumerate(bands):
        y0, y1 = n - k - 0.85, n - k - 0.15
        x = 0.0
        for share, state in ((c, "charge"), (h, "handshake"), (i, "idle")):
            fig.rect(x, y0, x + 100 * share, y1, STATE_COLORS[state])
            x += 100 * share
        fig.text(fig.left - 8, fig.py((y0 + y1) / 2) + 4, label, size=10, anchor="end", raw=True)
        fig.text(101, (y0 + y1) / 2, f"idle {100 * i:.1f}%", size=9)
    legend = []
    lx = fig.left
    for state, color in STATE_COLORS.items():
        legend.append(f'<rect x="{lx}" y="{fig.top - 18}" width="12" height="10" fill="{color}"/>')
        legend.append(f'<text x="{lx + 16}" y="{fig.top - 9}" font-size="10" '
                      f'font-family="sans-serif">{state}</text>')
        lx += 90
    fig.extra = legend
    return fig


def boxplot_figure(groups: dict[str, np.ndarray], bin_width_s: float, title: str) -> Figure:
    """Per-bin boxplots; ``groups`` maps a label to an (nbins, 5) five-number array."""
    fig = Figure(width=1100, height=460, title=title, xlabel="time of day (h)", ylabel="P_alloc (kW)")
    arrays = {k: np.asarray(v) for k, v in groups.items()}
    active = np.zeros(next(iter(arrays.values())).shape[0], dtype=bool)
    for a in arrays.values():
        active |= a[:, 4] > 0
    idx = np.flatnonzero(active)
    if idx.size == 0:
        idx = np.array([0])
    b0, b1 = max(idx[0] - 2, 0), idx[-1] + 3
    top = max(float(a[:, 4].max()) for a in arrays.values()) / 1000
    fig.set_limits(b0 * bin_width_s / 3600, b1 * bin_width_s / 3600, 0, max(top * 1.08, 1))
    m = len(arrays)
    slot = bin_width_s / 3600 / (m + 1)
    for g, (label, a) in enumerate(arrays.items()):
        color = PALETTE[g % len(PALETTE)]
        for b in range(b0, min(b1, a.shape[0])):
            lo, q1, med, q3, hi = a[b] / 1000
            xc = b * bin_width_s / 3600 + slot * (g + 1)
            fig.line(xc, lo, xc, hi, color, 0.8)
            fig.rect(xc - slot * 0.4, q1, xc + slot * 0.4, q3, color, stroke=color, opacity=0.35)
            fig.line(xc - slot * 0.4, med, xc + slot * 0.4, med, color, 1.2)
        fig.legend.append((label, color, ""))
    return fig


def overlay_figure(es_trace, pv, price, horizon_s: float, title: str) -> Figure:
    """Sandbox allocation and PV (kW, left axis) with the tariff on a right axis."""
    fig = Figure(width=900, height=420, title=title, xlabel="time of day (h)", ylabel="power (kW)",
                 margin=(60, 80, 50, 70))
    xs = [0.0] + [t / 3600 for t, _ in es_trace] + [horizon_s / 3600]
    ys = [0.0] + [p / 1000 for _, p in es_trace]
    ys.append(ys[-1])
    pv_x = [t / 3600 for t in pv.breakpoints] + [horizon_s / 3600]
    pv_y = [v / 1000 for v in pv.values]
    pv_y.append(pv_y[-1])
    top = max(max(ys), max(pv_y), 1.0) * 1.1
    fig.set_limits(0, horizon_s / 3600, 0, top)
    fig.step(xs, ys, PALETTE[0], label="grid / sandbox allocation")
    fig.step(pv_x, pv_y, PALETTE[2], label="PV available")
    pr_lo, pr_hi = min(price.values), max(price.values)
    if pr_hi == pr_lo:
        pr_lo, pr_hi = pr_lo - 0.5 * abs(pr_lo or 1), pr_hi + 0.5 * abs(pr_hi or 1)
    scale = lambda v: (v - pr_lo) / (pr_hi - pr_lo) * top * 0.9  # noqa: E731
    pr_x = [t / 3600 for t in price.breakpoints] + [horizon_s / 3600]
    pr_y = [scale(v) for v in price.values]
    pr_y.append(pr_y[-1])
    fig.step(pr_x, pr_y, PALETTE[1], dash="4,3", label="energy price (right axis)")
    extra = []
    R = fig.w - fig.right
    for v in nice_ticks(pr_lo, pr_hi, 4):
        y = fig.py(scale(v))
        extra.append(f'<line x1="{R}" y1="{y:.2f}" x2="{R + 4}" y2="{y:.2f}" stroke="#333"/>')
        extra.append(f'<text x="{R + 6}" y="{y + 3:.2f}" font-size="10" '
                     f'font-family="sans-serif">{v:g}</text>')
    extra.append(f'<text x="{fig.w - 14}" y="{fig.h / 2:.1f}" font-size="12" text-anchor="middle" '
                 f'font-family="sans-serif" transform="rotate(90 {fig.w - 14} {fig.h / 2:.1f})">'
                 f'price (per kWh)</text>')
    fig.extra = extra
    return fig


def save(fig: Figure, path) -> None:
    fig.save(path)
