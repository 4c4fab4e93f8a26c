"""Minimal SVG chart writer; no plotting dependency, deterministic output."""
from __future__ import annotations

from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 360
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 70, 20, 40, 70


def _header(title: str) -> list:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{escape(title)}</text>',
    ]


def _axes() -> list:
    x0, y0 = MARGIN_LEFT, HEIGHT - MARGIN_BOTTOM
    x1, y1 = WIDTH - MARGIN_RIGHT, MARGIN_TOP
    return [
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
    ]


def _scale(value: float, lo: float, hi: float, out_lo: float, out_hi: float) -> float:
    if hi <= lo:
        return (out_lo + out_hi) / 2.0
    return out_lo + (value - lo) / (hi - lo) * (out_hi - out_lo)


def bar_chart(labels, values, title: str, path) -> None:
    values = [float(v) for v in values]
    top = max(max(values), 0.0) or 1.0
    parts = _header(title) + _axes()
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    n = len(values)
    slot = plot_w / max(n, 1)
    base_y = HEIGHT - MARGIN_BOTTOM
    for i, (label, value) in enumerate(zip(labels, values)):
        bar_h = _scale(value, 0.0, top, 0.0, base_y - MARGIN_TOP)
        x = MARGIN_LEFT + i * slot + slot * 0.15
        parts.append(
            f'<rect x="{x:.2f}" y="{base_y - bar_h:.2f}" width="{slot * 0.7:.2f}" '
            f'height="{bar_h:.2f}" fill="#4878a8"/>'
        )
        cx = MARGIN_LEFT + (i + 0.5) * slot
        parts.append(
            f'<text x="{cx:.2f}" y="{base_y + 14:.2f}" text-anchor="end" font-size="10" '
            f'font-family="sans-serif" transform="rotate(-35 {cx:.2f} {base_y + 14:.2f})">'
            f'{escape(str(label))}</text>'
        )
        parts.append(
            f'<text x="{cx:.2f}" y="{base_y - bar_h - 4:.2f}" text-anchor="middle" '
            f'font-size="9" font-family="sans-serif">{value:.3f}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(parts) + "\n")


def line_chart(xs, ys, title: str, path, x_label: str = "", y_label: str = "") -> None:
    xs = [float(x) for x in xs]
    ys = [float(y) for y in ys]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(min(ys), 0.0), max(ys) or 1.0
    base_y = HEIGHT - MARGIN_BOTTOM
    points = []
    for x, y in zip(xs, ys):
        px = _scale(x, x_lo, x_hi, MARGIN_LEFT, WIDTH - MARGIN_RIGHT)
        py = _scale(y, y_lo, y_hi, base_y, MARGIN_TOP)
        points.append(f"{px:.2f},{py:.2f}")
    parts = _header(title) + _axes()
    parts.append(
        f'<polyline fill="none" stroke="#a84848" stroke-width="1.5" points="{" ".join(points)}"/>'
    )
    if x_label:
        parts.append(
            f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 8}" text-anchor="middle" font-size="12" '
            f'font-family="sans-serif">{escape(x_label)}</text>'
        )
    if y_label:
        parts.append(
            f'<text x="16" y="{HEIGHT / 2:.1f}" text-anchor="middle" font-size="12" '
            f'font-family="sans-serif" transform="rotate(-90 16 {HEIGHT / 2:.1f})">'
            f'{escape(y_label)}</text>'
        )
    for value, anchor_x in ((x_lo, MARGIN_LEFT), (x_hi, WIDTH - MARGIN_RIGHT)):
        parts.append(
            f'<text x="{anchor_x}" y="{base_y + 16}" text-anchor="middle" font-size="10" '
            f'font-family="sans-serif">{value:g}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(parts) + "\n")
