"""Tiny SVG line-chart writer so experiment outputs need no plotting stack."""

from __future__ import annotations

import math

_WIDTH = 640
_HEIGHT = 420
_MARGIN_L = 64
_MARGIN_R = 16
_MARGIN_T = 32
_MARGIN_B = 44

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f")


def _ticks(lo: float, hi: float, count: int = 5) -> list:
    if hi <= lo:
        return [lo]
    step = (hi - lo) / count
    mag = 10.0 ** math.floor(math.log10(step))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if mag * mult >= step:
            step = mag * mult
            break
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * abs(step):
        out.append(v)
        v += step
    return out or [lo]


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def write_line_chart(path, title: str, series: dict, logy: bool = False,
                     xlabel: str = "t", ylabel: str = "") -> None:
    """Write one SVG with a line per entry of ``series``.

    ``series`` maps label -> (xs, ys). With ``logy`` the y axis is log10 and
    nonpositive values are dropped from the plot (they have no log image).
    """
    cleaned = {}
    for label, (xs, ys) in series.items():
        pts = [(float(x), float(y)) for x, y in zip(xs, ys)
               if math.isfinite(float(x)) and math.isfinite(float(y))
               and (not logy or float(y) > 0.0)]
        if pts:
            cleaned[label] = pts
    if not cleaned:
        cleaned = {"empty": [(0.0, 0.0)]}

    def ty(y: float) -> float:
        return math.log10(y) if logy else y

    all_x = [x for pts in cleaned.values() for x, _ in pts]
    all_y = [ty(y) for pts in cleaned.values() for _, y in pts]
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(all_y), max(all_y)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.04 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad

    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def px(x: float) -> float:
        return _MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return _MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]

    axis = 'stroke="#444" stroke-width="1"'
    parts.append(f'<line x1="{_MARGIN_L}" y1="{_MARGIN_T}" x2="{_MARGIN_L}" '
                 f'y2="{_HEIGHT - _MARGIN_B}" {axis}/>')
    parts.append(f'<line x1="{_MARGIN_L}" y1="{_HEIGHT - _MARGIN_B}" '
                 f'x2="{_WIDTH - _MARGIN_R}" y2="{_HEIGHT - _MARGIN_B}" '
                 f'{axis}/>')

    for xv in _ticks(x_lo, x_hi):
        parts.append(f'<line x1="{px(xv):.1f}" y1="{_HEIGHT - _MARGIN_B}" '
                     f'x2="{px(xv):.1f}" y2="{_HEIGHT - _MARGIN_B + 4}" '
                     f'{axis}/>')
        parts.append(f'<text x="{px(xv):.1f}" y="{_HEIGHT - _MARGIN_B + 18}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="11">{_fmt(xv)}</text>')
    for yv in _ticks(y_lo, y_hi):
        label = f"1e{yv:.3g}" if logy else _fmt(yv)
        parts.append(f'<line x1="{_MARGIN_L - 4}" y1="{py(yv):.1f}" '
                     f'x2="{_MARGIN_L}" y2="{py(yv):.1f}" {axis}/>')
        parts.append(f'<text x="{_MARGIN_L - 8}" y="{py(yv) + 4:.1f}" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="11">{label}</text>')

    parts.append(f'<text x="{_WIDTH / 2:.1f}" y="{_HEIGHT - 10}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="12">{xlabel}</text>')
    if ylabel:
        parts.append(f'<text x="16" y="{_HEIGHT / 2:.1f}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="12" transform="rotate(-90 16 '
                     f'{_HEIGHT / 2:.1f})">{ylabel}</text>')

    for i, (label, pts) in enumerate(cleaned.items()):
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{px(x):.2f},{py(ty(y)):.2f}" for x, y in pts)
        parts.append(f'<polyline points="{coords}" fill="none" '
                     f'stroke="{color}" stroke-width="1.8"/>')
        ly = _MARGIN_T + 14 + 16 * i
        lx = _WIDTH - _MARGIN_R - 150
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" '
                     f'y2="{ly - 4}" stroke="{color}" stroke-width="1.8"/>')
        parts.append(f'<text x="{lx + 28}" y="{ly}" '
                     f'font-family="sans-serif" font-size="11">{label}'
                     f'</text>')

    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")
