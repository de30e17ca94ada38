"""CSV and SVG writers with byte-stable output."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np


def format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    text = str(v)
    if any(ch in text for ch in ',"\n'):
        text = '"' + text.replace('"', '""') + '"'
    return text


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(format_cell(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_text(path: Path, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def records_csv(records: Sequence[dict]) -> str:
    """CSV of a list of flat dicts; columns follow first-seen key order."""
    header: list[str] = []
    for rec in records:
        header.extend(k for k in rec if k not in header)
    return csv_text(header, ([rec.get(k, "") for k in header] for rec in records))


def svg_line_plot(xs: Sequence[float], ys: Sequence[float], title: str, xlabel: str, ylabel: str,
                  log: bool = True, width: int = 480, height: int = 320) -> str:
    """Single polyline with axes and end-point tick labels."""
    x = np.log10(np.asarray(xs, dtype=float)) if log else np.asarray(xs, dtype=float)
    y = np.log10(np.asarray(ys, dtype=float)) if log else np.asarray(ys, dtype=float)
    left, right, top, bottom = 70, 20, 40, 50
    span_x = (x.max() - x.min()) or 1.0
    span_y = (y.max() - y.min()) or 1.0

    def px(v):
        return left + (v - x.min()) / span_x * (width - left - right)

    def py(v):
        return height - bottom - (v - y.min()) / span_y * (height - top - bottom)

    points = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
    tick = (lambda v: f"{10 ** v:.4g}") if log else (lambda v: f"{v:.4g}")
    scale = " (log scale)" if log else ""
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" y2="{height - bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="black"/>',
        f'<polyline fill="none" stroke="steelblue" stroke-width="2" points="{points}"/>',
    ]
    parts += [f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" fill="steelblue"/>' for a, b in zip(x, y)]
    parts += [
        f'<text x="{px(x.min()):.1f}" y="{height - bottom + 16}" font-size="11" text-anchor="middle">'
        f'{tick(x.min())}</text>',
        f'<text x="{px(x.max()):.1f}" y="{height - bottom + 16}" font-size="11" text-anchor="middle">'
        f'{tick(x.max())}</text>',
        f'<text x="{left - 6}" y="{py(y.min()):.1f}" font-size="11" text-anchor="end">{tick(y.min())}</text>',
        f'<text x="{left - 6}" y="{py(y.max()):.1f}" font-size="11" text-anchor="end">{tick(y.max())}</text>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" font-size="12" text-anchor="middle">'
        f'{escape(xlabel + scale)}</text>',
        f'<text x="16" y="{height / 2:.1f}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 16 {height / 2:.1f})">{escape(ylabel + scale)}</text>',
        "</svg>",
    ]
    if not all(math.isfinite(v) for v in np.concatenate([x, y])):
        raise ValueError("plot data must be finite (and positive on log axes)")
    return "\n".join(parts) + "\n"
