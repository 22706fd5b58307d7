"""Self-contained SVG 1.1 charts for experiment results.

Hand-rolled on purpose: the structural tests count elements (one polyline
per method, one circle per scatter point), and nothing here needs a
plotting stack. Log-scale y axis; exact zeros are clamped to a decade
below the smallest positive value so degenerate-exact methods still plot.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

__all__ = ["emit_report", "svg_line_chart", "svg_scatter"]

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 150, 40, 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _esc(s: str) -> str:
    return (str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;"))


def _log_axis(values):
    positive = [v for v in values if v > 0 and math.isfinite(v)]
    if not positive:
        positive = [1e-3, 1.0]
    lo, hi = min(positive), max(positive)
    floor = lo / 10.0
    if lo == hi:
        lo, hi = lo / 2.0, hi * 2.0
    return math.log10(lo / 1.5), math.log10(hi * 1.5), floor


def _ticks(lo_log, hi_log):
    first = math.ceil(lo_log)
    last = math.floor(hi_log)
    if last < first:
        return [10 ** ((lo_log + hi_log) / 2.0)]
    return [10.0**e for e in range(first, last + 1)]


class _Canvas:
    def __init__(self, title, xlabel, ylabel):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
            f'width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-family="monospace" '
            f'font-size="14">{_esc(title)}</text>',
            f'<text x="{(MARGIN_L + WIDTH - MARGIN_R) / 2}" y="{HEIGHT - 10}" '
            f'text-anchor="middle" font-family="monospace" font-size="12">{_esc(xlabel)}</text>',
            f'<text x="16" y="{(MARGIN_T + HEIGHT - MARGIN_B) / 2}" text-anchor="middle" '
            f'font-family="monospace" font-size="12" transform="rotate(-90 16 '
            f'{(MARGIN_T + HEIGHT - MARGIN_B) / 2})">{_esc(ylabel)}</text>',
            f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{WIDTH - MARGIN_L - MARGIN_R}" '
            f'height="{HEIGHT - MARGIN_T - MARGIN_B}" fill="none" stroke="#999"/>',
        ]

    def add(self, fragment: str):
        self.parts.append(fragment)

    def legend(self, labels):
        x = WIDTH - MARGIN_R + 12
        for i, label in enumerate(labels):
            y = MARGIN_T + 16 + 18 * i
            color = PALETTE[i % len(PALETTE)]
            self.add(f'<line x1="{x}" y1="{y - 4}" x2="{x + 18}" y2="{y - 4}" '
                     f'stroke="{color}" stroke-width="2"/>')
            self.add(f'<text x="{x + 24}" y="{y}" font-family="monospace" '
                     f'font-size="11">{_esc(label)}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"])


def _x_map(values):
    lo, hi = min(values), max(values)
    if lo == hi:
        lo, hi = lo - 1, hi + 1
    span = WIDTH - MARGIN_L - MARGIN_R

    def to_px(v):
        return MARGIN_L + span * (v - lo) / (hi - lo)
    return to_px


def _y_map_log(values):
    lo_log, hi_log, floor = _log_axis(values)
    span = HEIGHT - MARGIN_T - MARGIN_B

    def to_px(v):
        v = max(v, floor)
        return HEIGHT - MARGIN_B - span * (math.log10(v) - lo_log) / (hi_log - lo_log)
    return to_px, lo_log, hi_log


def svg_line_chart(series: dict, title: str, xlabel: str, ylabel: str) -> str:
    """Median lines with min/max bands, one polyline per series.

    ``series`` maps label -> list of (x, median, lo, hi), sorted by x.
    """
    if not series:
        raise ValueError("no series to plot")
    xs = [p[0] for pts in series.values() for p in pts]
    ys = [v for pts in series.values() for p in pts for v in p[1:]]
    to_x = _x_map(xs)
    to_y, lo_log, hi_log = _y_map_log(ys)
    canvas = _Canvas(title, xlabel, ylabel)
    for tick in _ticks(lo_log, hi_log):
        py = to_y(tick)
        canvas.add(f'<line x1="{MARGIN_L}" y1="{py:.2f}" x2="{WIDTH - MARGIN_R}" '
                   f'y2="{py:.2f}" stroke="#eee"/>')
        canvas.add(f'<text x="{MARGIN_L - 6}" y="{py + 4:.2f}" text-anchor="end" '
                   f'font-family="monospace" font-size="10">1e{int(math.log10(tick))}</text>')
    for x in sorted(set(xs)):
        px = to_x(x)
        canvas.add(f'<text x="{px:.2f}" y="{HEIGHT - MARGIN_B + 16}" text-anchor="middle" '
                   f'font-family="monospace" font-size="10">{x:g}</text>')
    for i, (label, pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        band_up = [(to_x(x), to_y(hi)) for x, _, _, hi in pts]
        band_dn = [(to_x(x), to_y(lo)) for x, _, lo, _ in reversed(pts)]
        band = " ".join(f"{px:.2f},{py:.2f}" for px, py in band_up + band_dn)
        canvas.add(f'<polygon points="{band}" fill="{color}" opacity="0.15"/>')
        line = " ".join(f"{to_x(x):.2f},{to_y(med):.2f}" for x, med, _, _ in pts)
        canvas.add(f'<polyline points="{line}" fill="none" stroke="{color}" '
                   f'stroke-width="2"/>')
    canvas.legend(list(series.keys()))
    return canvas.render()


def svg_scatter(points, title: str, xlabel: str, ylabel: str) -> str:
    """Log-log scatter; ``points`` is a list of (x, y) pairs."""
    if not points:
        raise ValueError("no points to plot")
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    xlo_log, xhi_log, xfloor = _log_axis(xs)
    xspan = WIDTH - MARGIN_L - MARGIN_R

    def to_px(v):
        v = max(v, xfloor)
        return MARGIN_L + xspan * (math.log10(v) - xlo_log) / (xhi_log - xlo_log)

    to_py, lo_log, hi_log = _y_map_log(ys)
    canvas = _Canvas(title, xlabel, ylabel)
    for tick in _ticks(lo_log, hi_log):
        py = to_py(tick)
        canvas.add(f'<line x1="{MARGIN_L}" y1="{py:.2f}" x2="{WIDTH - MARGIN_R}" '
                   f'y2="{py:.2f}" stroke="#eee"/>')
        canvas.add(f'<text x="{MARGIN_L - 6}" y="{py + 4:.2f}" text-anchor="end" '
                   f'font-family="monospace" font-size="10">1e{int(math.log10(tick))}</text>')
    for tick in _ticks(xlo_log, xhi_log):
        px = to_px(tick)
        canvas.add(f'<text x="{px:.2f}" y="{HEIGHT - MARGIN_B + 16}" text-anchor="middle" '
                   f'font-family="monospace" font-size="10">1e{int(math.log10(tick))}</text>')
    for x, y in points:
        canvas.add(f'<circle cx="{to_px(x):.2f}" cy="{to_py(y):.2f}" r="3" '
                   f'fill="#1f77b4" opacity="0.6"/>')
    return canvas.render()


def emit_report(rows, out_dir) -> list:
    """Write metric-vs-M charts and objective-vs-error scatters; returns paths."""
    rows = [r for r in rows if r.status == "ok"]
    if not rows:
        raise ValueError("result table has no successful rows")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    datasets = sorted({r.dataset for r in rows})
    for ds in datasets:
        ds_rows = [r for r in rows if r.dataset == ds]
        for metric in ("mean_rmse", "std_rmse", "pred_rmse", "kl_to_exact"):
            series = {}
            for method in sorted({r.method for r in ds_rows}):
                pts = []
                for m in sorted({r.M for r in ds_rows if r.method == method}):
                    vals = [getattr(r, metric) for r in ds_rows
                            if r.method == method and r.M == m
                            and math.isfinite(getattr(r, metric))]
                    if vals:
                        pts.append((m, float(np.median(vals)),
                                    float(min(vals)), float(max(vals))))
                if pts:
                    series[method] = pts
            if not series:
                continue
            path = out_dir / f"{ds}_{metric}.svg"
            path.write_text(svg_line_chart(series, f"{ds}: {metric} vs M", "M",
                                           metric), encoding="utf-8")
            written.append(path)
        obj_rows = [r for r in ds_rows if r.method == "pf-dtc"
                    and r.objective_final is not None
                    and math.isfinite(r.objective_final)]
        for metric in ("mean_rmse", "std_rmse"):
            pts = [(abs(r.objective_final) + 1e-300, getattr(r, metric))
                   for r in obj_rows if math.isfinite(getattr(r, metric))]
            if pts:
                path = out_dir / f"{ds}_objective_vs_{metric}.svg"
                path.write_text(svg_scatter(pts, f"{ds}: objective vs {metric}",
                                            "|objective|", metric), encoding="utf-8")
                written.append(path)
    return written
