"""Hand-rolled SVG bar charts.

Charts are plain text assembled from sorted inputs with fixed float
formatting, so identical metric runs produce byte-identical files.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

_WIDTH = 640
_BAR_AREA_HEIGHT = 260
_MARGIN_LEFT = 60
_MARGIN_TOP = 40
_LABEL_SPACE = 90


def _fmt(x: float) -> str:
    return f"{x:.4f}".rstrip("0").rstrip(".")


def bar_chart_svg(title: str, labels: list[str], values: list[float]) -> str:
    """Vertical bar chart; one bar per (label, value), order preserved."""
    if len(labels) != len(values):
        raise ValueError("labels and values must have equal length")
    n = max(1, len(labels))
    height = _MARGIN_TOP + _BAR_AREA_HEIGHT + _LABEL_SPACE
    plot_width = _WIDTH - _MARGIN_LEFT - 20
    slot = plot_width / n
    bar_w = slot * 0.7
    vmax = max([v for v in values if v > 0] or [1.0])

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{height}" '
        f'viewBox="0 0 {_WIDTH} {height}" font-family="monospace" font-size="12">',
        f'<text x="{_WIDTH // 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{_MARGIN_LEFT}" y1="{_MARGIN_TOP + _BAR_AREA_HEIGHT}" '
        f'x2="{_WIDTH - 20}" y2="{_MARGIN_TOP + _BAR_AREA_HEIGHT}" stroke="black"/>',
    ]
    for i, (label, value) in enumerate(zip(labels, values)):
        h = 0.0 if vmax == 0 else max(0.0, value) / vmax * _BAR_AREA_HEIGHT
        x = _MARGIN_LEFT + i * slot + (slot - bar_w) / 2
        y = _MARGIN_TOP + _BAR_AREA_HEIGHT - h
        cx = x + bar_w / 2
        label_y = _MARGIN_TOP + _BAR_AREA_HEIGHT + 14
        parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(bar_w)}" height="{_fmt(h)}" fill="#4878a8"/>'
        )
        parts.append(
            f'<text x="{_fmt(cx)}" y="{_fmt(y - 4)}" text-anchor="middle">{escape(_fmt(value))}</text>'
        )
        parts.append(
            f'<text x="{_fmt(cx)}" y="{label_y}" text-anchor="end" '
            f'transform="rotate(-40 {_fmt(cx)} {label_y})">{escape(label)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
