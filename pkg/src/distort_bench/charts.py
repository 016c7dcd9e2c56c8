"""Dependency-free SVG line charts (AP versus severity level)."""
from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 480, 320
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 56, 16, 32, 44
MAX_LEVEL = 10


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def line_chart(
    title: str,
    series: Sequence[tuple[str, Sequence[tuple[int, float]], str]],
    reference: float | None = None,
) -> str:
    """Render named ``(level, value)`` series on a 0..10 x 0..1 grid.

    ``series`` items are ``(label, points, css_color)``; ``reference`` draws a
    dashed horizontal line (the clean score).
    """
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def sx(level: float) -> float:
        return MARGIN_L + pw * level / MAX_LEVEL

    def sy(value: float) -> float:
        return MARGIN_T + ph * (1.0 - min(max(value, 0.0), 1.0))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{MARGIN_L}" y1="{_fmt(sy(0))}" x2="{_fmt(sx(MAX_LEVEL))}" y2="{_fmt(sy(0))}" stroke="black"/>',
        f'<line x1="{MARGIN_L}" y1="{_fmt(sy(0))}" x2="{MARGIN_L}" y2="{_fmt(sy(1))}" stroke="black"/>',
    ]
    for lv in range(MAX_LEVEL + 1):
        out.append(
            f'<text x="{_fmt(sx(lv))}" y="{_fmt(sy(0) + 16)}" text-anchor="middle" font-size="10">{lv}</text>'
        )
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        out.append(
            f'<text x="{MARGIN_L - 6}" y="{_fmt(sy(tick) + 3)}" text-anchor="end" font-size="10">{tick:.2f}</text>'
        )
    out.append(
        f'<text x="{_fmt(sx(MAX_LEVEL / 2))}" y="{HEIGHT - 8}" text-anchor="middle" font-size="11">distortion level</text>'
    )
    if reference is not None:
        out.append(
            f'<line class="reference" x1="{MARGIN_L}" y1="{_fmt(sy(reference))}" x2="{_fmt(sx(MAX_LEVEL))}" '
            f'y2="{_fmt(sy(reference))}" stroke="gray" stroke-dasharray="4 3"/>'
        )
    for i, (label, points, color) in enumerate(series):
        pts = " ".join(f"{_fmt(sx(lv))},{_fmt(sy(v))}" for lv, v in sorted(points))
        out.append(
            f'<polyline class="series" data-label="{escape(label)}" points="{pts}" fill="none" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        for lv, v in sorted(points):
            out.append(f'<circle cx="{_fmt(sx(lv))}" cy="{_fmt(sy(v))}" r="2.5" fill="{color}"/>')
        out.append(
            f'<text x="{WIDTH - MARGIN_R}" y="{MARGIN_T + 12 * i}" text-anchor="end" font-size="10" '
            f'fill="{color}">{escape(label)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
