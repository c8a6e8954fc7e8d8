"""Self-contained SVG plots of cumulative regret curves."""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Callable, Sequence
from xml.sax.saxutils import escape

MAX_POINTS = 1500
PANEL_W, PANEL_H = 560, 360
MARGIN = {"left": 80, "right": 20, "top": 40, "bottom": 55}


def read_curve(path: str | Path) -> tuple[list[float], list[float]]:
    """(t, cumulative regret) from a run trace or a sweep curve CSV."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if "cum_regret" in fields:
            col = "cum_regret"
        elif "mean_cum_regret" in fields:
            col = "mean_cum_regret"
        else:
            raise ValueError(f"{path}: no cum_regret or mean_cum_regret column")
        ts, ys = [], []
        for row in reader:
            ts.append(float(row["t"]))
            ys.append(float(row[col]))
    if not ts:
        raise ValueError(f"{path}: curve is empty")
    return ts, ys


def _thin(ts: Sequence[float], ys: Sequence[float], log_x: bool) -> list[tuple[float, float]]:
    n = len(ts)
    if n <= MAX_POINTS:
        return list(zip(ts, ys))
    if log_x:
        idx = sorted({min(n - 1, int(round(math.exp(i * math.log(n) / MAX_POINTS))) - 1)
                      for i in range(MAX_POINTS + 1)})
    else:
        idx = sorted({i * (n - 1) // MAX_POINTS for i in range(MAX_POINTS + 1)})
    return [(ts[i], ys[i]) for i in idx]


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(v)
        v += step
    return out


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e5 or abs(v) < 1e-2:
        return f"{v:.1e}"
    return f"{v:g}"


def _panel(series: list[tuple[str, str, list[tuple[float, float]]]], title: str,
           xlabel: str, log_x: bool, x0: int) -> list[str]:
    xs = [x for _, _, pts in series for x, _ in pts]
    ys = [y for _, _, pts in series for _, y in pts]
    fx: Callable[[float], float] = (lambda v: math.log10(v)) if log_x else (lambda v: v)
    x_lo, x_hi = fx(min(xs)), fx(max(xs))
    y_lo, y_hi = 0.0, max(max(ys), 1e-12) * 1.05
    if x_hi == x_lo:
        x_hi = x_lo + 1
    left, top = x0 + MARGIN["left"], MARGIN["top"]
    w = PANEL_W - MARGIN["left"] - MARGIN["right"]
    h = PANEL_H - MARGIN["top"] - MARGIN["bottom"]

    def px(v):
        return left + (fx(v) - x_lo) / (x_hi - x_lo) * w

    def py(v):
        return top + h - (v - y_lo) / (y_hi - y_lo) * h

    out = [f'<rect x="{left}" y="{top}" width="{w}" height="{h}" fill="white" stroke="#444"/>']
    out.append(f'<text x="{left + w / 2:.1f}" y="{top - 14}" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for tv in _ticks(y_lo, y_hi):
        y = py(tv)
        out.append(f'<line x1="{left}" y1="{y:.1f}" x2="{left + w}" y2="{y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end" font-size="11">{_fmt(tv)}</text>')
    if log_x:
        xt = [10 ** e for e in range(math.ceil(x_lo), math.floor(x_hi) + 1)]
    else:
        xt = _ticks(x_lo, x_hi)
    for tv in xt:
        x = px(tv)
        out.append(f'<line x1="{x:.1f}" y1="{top}" x2="{x:.1f}" y2="{top + h}" stroke="#eee"/>')
        out.append(f'<text x="{x:.1f}" y="{top + h + 16}" text-anchor="middle" font-size="11">{_fmt(tv)}</text>')
    out.append(f'<text x="{left + w / 2:.1f}" y="{top + h + 40}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    out.append(f'<text x="{x0 + 18}" y="{top + h / 2:.1f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 {x0 + 18} {top + h / 2:.1f})">cumulative regret</text>')
    for i, (label, color, pts) in enumerate(series):
        path = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{path}"/>')
        ly = top + 16 + 16 * i
        out.append(f'<line x1="{left + 10}" y1="{ly}" x2="{left + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + 36}" y="{ly + 4}" font-size="11">{escape(label)}</text>')
    return out


def render_svg(ts: Sequence[float], ys: Sequence[float],
               bound: Callable[[float], float] | None = None) -> str:
    """Linear-axes panel, plus a log-x panel with the bound when ``bound`` is given."""
    panels = [_panel([("empirical", "#1f77b4", _thin(ts, ys, False))],
                     "Cumulative regret", "t", False, 0)]
    if bound is not None:
        emp = _thin(ts, ys, True)
        bnd = [(x, bound(x)) for x, _ in emp if x > 1]
        panels.append(_panel([("empirical", "#1f77b4", emp), ("upper bound", "#d62728", bnd)],
                             "Cumulative regret vs log t", "t (log scale)", True, PANEL_W))
    width = PANEL_W * len(panels)
    body = "\n".join(line for p in panels for line in p)
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL_H}" '
            f'viewBox="0 0 {width} {PANEL_H}" font-family="sans-serif">\n{body}\n</svg>\n')
