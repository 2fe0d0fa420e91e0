"""SVG timelines: ground truth above prediction, optional risk bar underneath."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

from .errors import LengthMismatch
from .metrics import segments

# Fixed palette indexed by class id (cycled past its length).
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
    "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939", "#8c6d31", "#843c39",
    "#7b4173", "#3182bd", "#e6550d", "#31a354", "#756bb1", "#636363", "#969696",
)
RISK_COLORS = {"Low": "#2e9e44", "Medium": "#f0a202", "High": "#d7263d"}

BAR_HEIGHT = 24
GAP = 8
LABEL_WIDTH = 90
WIDTH = 900


def class_color(class_id: int) -> str:
    return PALETTE[class_id % len(PALETTE)]


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    width: float
    height: float
    fill: str


def bar_rects(frames: Sequence[int], y: float, colors) -> list[Rect]:
    n = len(frames)
    scale = (WIDTH - LABEL_WIDTH) / n
    return [
        Rect(LABEL_WIDTH + start * scale, y, (end - start) * scale, BAR_HEIGHT, colors(cls))
        for cls, start, end in segments(frames)
    ]


def timeline_rects(truth: Sequence[int], pred: Sequence[int], risk: Mapping[int, str] | None = None):
    """Rectangles for each bar, as a list of (row title, rects)."""
    if len(truth) != len(pred):
        raise LengthMismatch(f"ground truth has {len(truth)} frames, prediction has {len(pred)}")
    if len(truth) == 0:
        raise LengthMismatch("cannot draw an empty timeline")
    rows = [("truth", bar_rects(truth, GAP, class_color)),
            ("predicted", bar_rects(pred, 2 * GAP + BAR_HEIGHT, class_color))]
    if risk is not None:
        def risk_color(cls):
            return RISK_COLORS[str(getattr(risk[cls], "value", risk[cls]))]
        rows.append(("risk", bar_rects(pred, 3 * GAP + 2 * BAR_HEIGHT, risk_color)))
    return rows


def render_svg(truth: Sequence[int], pred: Sequence[int], risk: Mapping[int, str] | None = None) -> str:
    rows = timeline_rects(truth, pred, risk)
    height = len(rows) * (BAR_HEIGHT + GAP) + GAP
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
           f'viewBox="0 0 {WIDTH} {height}">']
    for title, rects in rows:
        y = rects[0].y
        out.append(f'<text x="4" y="{y + BAR_HEIGHT * 0.7:.3f}" font-family="sans-serif" '
                   f'font-size="12">{escape(title)}</text>')
        out.append(f'<g id="{title}">')
        for r in rects:
            out.append(f'<rect x="{r.x:.3f}" y="{r.y:.3f}" width="{r.width:.3f}" '
                       f'height="{r.height:.3f}" fill="{r.fill}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
