"""Minimal deterministic SVG output for study artifacts.

Hand-rolled on purpose: the generated markup depends only on the data and
the header comment, so identical runs produce byte-identical files that can
be diffed and golden-tested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Series", "loglog_plot_svg", "heatmap_svg"]

_PALETTE = ["#1f6fb4", "#d95f02", "#2a9d4e", "#7550a8"]


@dataclass(frozen=True)
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    slope: float | None = None
    stderr: float | None = None


def _fmt(v: float) -> str:
    return format(v, ".2f")


def _ticks(lo: float, hi: float) -> list[float]:
    lo_e = math.floor(math.log10(lo))
    hi_e = math.ceil(math.log10(hi))
    return [10.0**e for e in range(lo_e, hi_e + 1)]


def loglog_plot_svg(series: list[Series], title: str, header_comment: str,
                    xlabel: str = "network size", ylabel: str = "sup error") -> str:
    """Log-log scatter with one fitted line per series carrying a slope."""
    width, height = 640, 460
    left, right, top, bottom = 70, 20, 46, 56
    xs = np.concatenate([s.x for s in series]).astype(float)
    ys = np.concatenate([s.y for s in series]).astype(float)
    xmin, xmax = xs.min() / 1.3, xs.max() * 1.3
    ymin, ymax = ys.min() / 1.6, ys.max() * 1.6

    def px(x: float) -> float:
        return left + (math.log10(x) - math.log10(xmin)) / (math.log10(xmax) - math.log10(xmin)) * (
            width - left - right
        )

    def py(y: float) -> float:
        return height - bottom - (math.log10(y) - math.log10(ymin)) / (
            math.log10(ymax) - math.log10(ymin)
        ) * (height - top - bottom)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f"<!-- {header_comment} -->",
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="15" '
        f'font-family="sans-serif">{title}</text>',
    ]
    # frame and ticks
    out.append(
        f'<rect x="{left}" y="{top}" width="{width - left - right}" '
        f'height="{height - top - bottom}" fill="none" stroke="#444"/>'
    )
    for tx in _ticks(xmin, xmax):
        if xmin <= tx <= xmax:
            out.append(
                f'<line x1="{px(tx):.1f}" y1="{height - bottom}" x2="{px(tx):.1f}" '
                f'y2="{height - bottom + 5}" stroke="#444"/>'
            )
            out.append(
                f'<text x="{px(tx):.1f}" y="{height - bottom + 19}" text-anchor="middle" '
                f'font-size="11" font-family="sans-serif">1e{int(math.log10(tx))}</text>'
            )
    for ty in _ticks(ymin, ymax):
        if ymin <= ty <= ymax:
            out.append(
                f'<line x1="{left - 5}" y1="{py(ty):.1f}" x2="{left}" y2="{py(ty):.1f}" stroke="#444"/>'
            )
            out.append(
                f'<text x="{left - 8}" y="{py(ty) + 4:.1f}" text-anchor="end" font-size="11" '
                f'font-family="sans-serif">1e{int(round(math.log10(ty)))}</text>'
            )
    out.append(
        f'<text x="{width / 2:.1f}" y="{height - 14}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif">{xlabel}</text>'
    )
    out.append(
        f'<text x="18" y="{height / 2:.1f}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif" transform="rotate(-90 18 {height / 2:.1f})">{ylabel}</text>'
    )

    for i, s in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        for xv, yv in zip(s.x, s.y):
            out.append(f'<circle cx="{px(xv):.2f}" cy="{py(yv):.2f}" r="3.4" fill="{color}"/>')
        label = s.label
        if s.slope is not None:
            lx = np.log(np.asarray(s.x, dtype=float))
            ly = np.log(np.asarray(s.y, dtype=float))
            intercept = ly.mean() - s.slope * lx.mean()
            x_line = np.array([s.x.min(), s.x.max()], dtype=float)
            y_line = np.exp(intercept + s.slope * np.log(x_line))
            out.append(
                f'<line x1="{px(x_line[0]):.2f}" y1="{py(y_line[0]):.2f}" '
                f'x2="{px(x_line[1]):.2f}" y2="{py(y_line[1]):.2f}" '
                f'stroke="{color}" stroke-width="1.6" stroke-dasharray="6 3"/>'
            )
            label += f" (slope {_fmt(s.slope)}"
            if s.stderr is not None:
                label += f" ± {_fmt(s.stderr)}"
            label += ")"
        out.append(
            f'<text x="{left + 12}" y="{top + 18 + 17 * i}" font-size="12" '
            f'font-family="sans-serif" fill="{color}">{label}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _color(v: float) -> str:
    """Two-ramp diverging map on [-1, 1]: blue, white, red."""
    v = max(-1.0, min(1.0, v))
    if v < 0:
        t = 1.0 + v
        r, g, b = 59 + t * (255 - 59), 76 + t * (255 - 76), 192 + t * (255 - 192)
    else:
        t = 1.0 - v
        r, g, b = 180 + t * (255 - 180), 4 + t * (255 - 4), 38 + t * (255 - 38)
    return f"#{int(r):02x}{int(g):02x}{int(b):02x}"


def heatmap_svg(values: np.ndarray, title: str, header_comment: str) -> str:
    """Longitude-latitude heat map of values on a regular grid (rows = latitude)."""
    values = np.asarray(values, dtype=float)
    vmax = float(np.max(np.abs(values))) or 1.0
    n_lat, n_lon = values.shape
    cell = max(2, 560 // max(n_lat, n_lon))
    width = n_lon * cell + 90
    height = n_lat * cell + 70
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f"<!-- {header_comment} -->",
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14" '
        f'font-family="sans-serif">{title}</text>',
    ]
    for i in range(n_lat):
        for j in range(n_lon):
            out.append(
                f'<rect x="{30 + j * cell}" y="{40 + i * cell}" width="{cell}" height="{cell}" '
                f'fill="{_color(values[i, j] / vmax)}"/>'
            )
    # color key
    key_x = 30 + n_lon * cell + 14
    for k in range(11):
        v = 1.0 - 2.0 * k / 10.0
        out.append(
            f'<rect x="{key_x}" y="{40 + k * (n_lat * cell / 11):.1f}" width="14" '
            f'height="{n_lat * cell / 11:.1f}" fill="{_color(v)}"/>'
        )
    out.append(
        f'<text x="{key_x + 18}" y="48" font-size="10" font-family="sans-serif">+{vmax:.3g}</text>'
    )
    out.append(
        f'<text x="{key_x + 18}" y="{40 + n_lat * cell:.1f}" font-size="10" '
        f'font-family="sans-serif">-{vmax:.3g}</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"
