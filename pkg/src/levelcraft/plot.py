"""Minimal SVG line rendering for convergence traces.

Diagnostic charts only: one polyline per metric on a log-scaled y axis
against cumulative gradient evaluations. Pure function of the trace records,
so a plot can always be regenerated offline from the CSV alone; no plotting
dependency involved.
"""
from __future__ import annotations

import math

_WIDTH, _HEIGHT = 640, 420
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70, 20, 30, 50
_FLOOR = 1e-16


def _log_ticks(lo: float, hi: float) -> list:
    lo_e = math.floor(math.log10(lo))
    hi_e = math.ceil(math.log10(hi))
    step = max(1, (hi_e - lo_e) // 6)
    return [10.0 ** e for e in range(lo_e, hi_e + 1, step)]


def _lin_ticks(lo: float, hi: float, n: int = 5) -> list:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = math.ceil(raw / mag) * mag
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-12 * step:
        ticks.append(v)
        v += step
    return ticks


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.0e}"
    return f"{v:g}"


def render_trace_svg(records, y_field: str = "upper", x_field: str = "gevals",
                     title: str = "") -> str:
    """Render one metric of a trace as an SVG line chart (log-scale y)."""
    points = []
    for rec in records:
        x = getattr(rec, x_field)
        y = getattr(rec, y_field)
        if x is None or y is None:
            continue
        points.append((float(x), max(float(y), _FLOOR)))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
    ]
    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B
    if title:
        parts.append(f'<text x="{_WIDTH / 2:.1f}" y="20" text-anchor="middle" '
                     f'font-family="monospace" font-size="13">{title}</text>')
    if points:
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        x_lo, x_hi = min(xs), max(xs)
        y_lo, y_hi = min(ys), max(ys)
        if x_hi <= x_lo:
            x_hi = x_lo + 1.0
        if y_hi <= y_lo:
            y_hi = y_lo * 10.0
        ly_lo, ly_hi = math.log10(y_lo), math.log10(y_hi)

        def px(x: float) -> float:
            return _MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

        def py(y: float) -> float:
            return _MARGIN_T + (ly_hi - math.log10(y)) / (ly_hi - ly_lo) * plot_h

        for tick in _lin_ticks(x_lo, x_hi):
            tx = px(tick)
            parts.append(f'<line x1="{tx:.1f}" y1="{_MARGIN_T}" x2="{tx:.1f}" '
                         f'y2="{_MARGIN_T + plot_h}" stroke="#dddddd"/>')
            parts.append(f'<text x="{tx:.1f}" y="{_MARGIN_T + plot_h + 16}" text-anchor="middle" '
                         f'font-family="monospace" font-size="11">{_fmt(tick)}</text>')
        for tick in _log_ticks(y_lo, y_hi):
            if tick < y_lo / 10 or tick > y_hi * 10:
                continue
            ty = py(min(max(tick, y_lo), y_hi))
            parts.append(f'<line x1="{_MARGIN_L}" y1="{ty:.1f}" x2="{_MARGIN_L + plot_w}" '
                         f'y2="{ty:.1f}" stroke="#dddddd"/>')
            parts.append(f'<text x="{_MARGIN_L - 6}" y="{ty + 4:.1f}" text-anchor="end" '
                         f'font-family="monospace" font-size="11">{_fmt(tick)}</text>')
        path = " ".join(f"{'M' if i == 0 else 'L'}{px(x):.2f},{py(y):.2f}"
                        for i, (x, y) in enumerate(points))
        parts.append(f'<path d="{path}" fill="none" stroke="#1f3b99" stroke-width="1.5"/>')
    parts.append(f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" height="{plot_h}" '
                 f'fill="none" stroke="#333333"/>')
    parts.append(f'<text x="{_MARGIN_L + plot_w / 2:.1f}" y="{_HEIGHT - 12}" text-anchor="middle" '
                 f'font-family="monospace" font-size="12">{x_field}</text>')
    parts.append(f'<text x="16" y="{_MARGIN_T + plot_h / 2:.1f}" text-anchor="middle" '
                 f'font-family="monospace" font-size="12" '
                 f'transform="rotate(-90 16 {_MARGIN_T + plot_h / 2:.1f})">{y_field}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
