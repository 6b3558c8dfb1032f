"""Deterministic SVG tour plots: city dots, closed tour path, length label."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .tsp_core import TspInstance, check_tour, tour_length

SIZE = 480
MARGIN = 0.05


def _bounds(cities):
    # always show the unit square, grow to cover any city outside it
    lo = np.minimum(cities.min(axis=0), 0.0)
    hi = np.maximum(cities.max(axis=0), 1.0)
    span = float(max(hi - lo))
    return lo - MARGIN * span, span * (1 + 2 * MARGIN)


def _num(x: float) -> str:
    s = f"{x:.3f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def tour_svg(instance: TspInstance, tour, title: str | None = None) -> str:
    """Render ``tour`` over ``instance`` as an SVG document string.

    Output depends only on the inputs, so identical calls give identical bytes.
    """
    perm = check_tour(instance.n, tour)
    cities = instance.cities
    origin, span = _bounds(cities)
    scale = SIZE / span

    def xy(p):
        # svg y grows downward
        return _num((p[0] - origin[0]) * scale), _num(SIZE - (p[1] - origin[1]) * scale)

    pts = [xy(cities[i]) for i in perm]
    d = "M" + " L".join(f"{x} {y}" for x, y in pts) + " Z"
    length = tour_length(instance, perm)
    label = f"length {length:.4f}"
    if title:
        label = f"{title}: {label}"
    r = _num(max(2.0, SIZE / 160))
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE + 24}" '
        f'viewBox="0 0 {SIZE} {SIZE + 24}">',
        f'<rect x="0" y="0" width="{SIZE}" height="{SIZE + 24}" fill="white"/>',
        f'<path class="tour" d="{d}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>',
    ]
    for i in range(instance.n):
        x, y = xy(cities[i])
        lines.append(f'<circle class="city" cx="{x}" cy="{y}" r="{r}" fill="#d62728"/>')
    lines.append(
        f'<text x="8" y="{SIZE + 17}" font-family="monospace" font-size="13">'
        f"{escape(label)}</text>"
    )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_tour_svg(path, instance: TspInstance, tour, title: str | None = None) -> str:
    text = tour_svg(instance, tour, title)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return text
