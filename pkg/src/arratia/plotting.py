"""Plot-data export: gnuplot-style .dat tables and small self-contained SVG
charts.  No plotting library; output bytes are deterministic."""

from __future__ import annotations

import math

from .errors import ConfigError

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 70, 20, 30, 50


def write_dat(path: str, headers: list[str], rows: list[tuple]) -> None:
    if not rows:
        raise ConfigError("nothing to plot")
    with open(path, "w") as fh:
        fh.write("# " + " ".join(headers) + "\n")
        for row in rows:
            fh.write(" ".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min(s * mag for s in (1, 2, 5, 10) if s * mag >= raw)
    first = math.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + 1e-12 * step:
        out.append(round(v, 12))
        v += step
    return out


class _Canvas:
    def __init__(self, title, xlabel, ylabel, xlo, xhi, ylo, yhi):
        pad = 0.05 * (yhi - ylo) if yhi > ylo else 1.0
        self.xlo, self.xhi = xlo, xhi if xhi > xlo else xlo + 1.0
        self.ylo, self.yhi = ylo - pad, yhi + pad
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
            f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
            f'<rect width="{_W}" height="{_H}" fill="white"/>',
            f'<text x="{_W // 2}" y="18" text-anchor="middle" '
            f'font-size="14">{title}</text>',
            f'<text x="{_W // 2}" y="{_H - 10}" text-anchor="middle">{xlabel}</text>',
            f'<text x="16" y="{_H // 2}" text-anchor="middle" '
            f'transform="rotate(-90 16 {_H // 2})">{ylabel}</text>',
        ]
        self._axes()

    def px(self, x):
        return _ML + (x - self.xlo) / (self.xhi - self.xlo) * (_W - _ML - _MR)

    def py(self, y):
        return _H - _MB - (y - self.ylo) / (self.yhi - self.ylo) * (_H - _MT - _MB)

    def _axes(self):
        p = self.parts
        p.append(f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
                 f'height="{_H - _MT - _MB}" fill="none" stroke="black"/>')
        for tx in _ticks(self.xlo, self.xhi):
            if self.xlo <= tx <= self.xhi:
                x = self.px(tx)
                p.append(f'<line x1="{x:.1f}" y1="{_H - _MB}" x2="{x:.1f}" '
                         f'y2="{_H - _MB + 4}" stroke="black"/>')
                p.append(f'<text x="{x:.1f}" y="{_H - _MB + 16}" '
                         f'text-anchor="middle">{tx:g}</text>')
        for ty in _ticks(self.ylo, self.yhi):
            if self.ylo <= ty <= self.yhi:
                y = self.py(ty)
                p.append(f'<line x1="{_ML - 4}" y1="{y:.1f}" x2="{_ML}" '
                         f'y2="{y:.1f}" stroke="black"/>')
                p.append(f'<text x="{_ML - 8}" y="{y + 4:.1f}" '
                         f'text-anchor="end">{ty:g}</text>')

    def save(self, path):
        self.parts.append("</svg>")
        with open(path, "w") as fh:
            fh.write("\n".join(self.parts))


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def line_chart_svg(path: str, xs: list[float], series: dict[str, list[float]],
                   errors: dict[str, list[float]] | None = None,
                   title: str = "", xlabel: str = "", ylabel: str = "") -> None:
    if not xs or not series:
        raise ConfigError("nothing to plot")
    errors = errors or {}
    ylo = min(min(v) for v in series.values())
    yhi = max(max(v) for v in series.values())
    for name, errs in errors.items():
        ylo = min(ylo, min(v - e for v, e in zip(series[name], errs)))
        yhi = max(yhi, max(v + e for v, e in zip(series[name], errs)))
    c = _Canvas(title, xlabel, ylabel, min(xs), max(xs), ylo, yhi)
    for i, (name, ys) in enumerate(series.items()):
        col = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{c.px(x):.1f},{c.py(y):.1f}" for x, y in zip(xs, ys))
        c.parts.append(f'<polyline points="{pts}" fill="none" stroke="{col}" '
                       f'stroke-width="1.5"/>')
        for x, y in zip(xs, ys):
            c.parts.append(f'<circle cx="{c.px(x):.1f}" cy="{c.py(y):.1f}" '
                           f'r="3" fill="{col}"/>')
        for x, y, e in zip(xs, ys, errors.get(name, [])):
            c.parts.append(f'<line x1="{c.px(x):.1f}" y1="{c.py(y - e):.1f}" '
                           f'x2="{c.px(x):.1f}" y2="{c.py(y + e):.1f}" '
                           f'stroke="{col}"/>')
        c.parts.append(f'<text x="{_W - _MR - 8}" y="{_MT + 16 + 14 * i}" '
                       f'text-anchor="end" fill="{col}">{name}</text>')
    c.save(path)


def bar_chart_svg(path: str, labels: list[str], values: list[float],
                  errors: list[float] | None = None, title: str = "",
                  ylabel: str = "") -> None:
    if not labels:
        raise ConfigError("nothing to plot")
    errors = errors or [0.0] * len(values)
    ylo = min(0.0, min(v - e for v, e in zip(values, errors)))
    yhi = max(v + e for v, e in zip(values, errors))
    c = _Canvas(title, "", ylabel, 0.0, float(len(labels)), ylo, yhi)
    for i, (lab, v, e) in enumerate(zip(labels, values, errors)):
        col = _COLORS[i % len(_COLORS)]
        x0 = c.px(i + 0.15)
        x1 = c.px(i + 0.85)
        y0 = c.py(max(v, 0.0))
        y1 = c.py(min(v, 0.0))
        c.parts.append(f'<rect x="{x0:.1f}" y="{y0:.1f}" '
                       f'width="{x1 - x0:.1f}" height="{max(y1 - y0, 0.5):.1f}" '
                       f'fill="{col}" fill-opacity="0.7"/>')
        if e:
            xm = c.px(i + 0.5)
            c.parts.append(f'<line x1="{xm:.1f}" y1="{c.py(v - e):.1f}" '
                           f'x2="{xm:.1f}" y2="{c.py(v + e):.1f}" stroke="black"/>')
        c.parts.append(f'<text x="{c.px(i + 0.5):.1f}" y="{_H - _MB + 16}" '
                       f'text-anchor="middle">{lab}</text>')
    c.save(path)
