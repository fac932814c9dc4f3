"""SVG rendering of planar partitions over a dot cloud of the measures."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PART_COLORS = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
    "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
]
DOT_COLORS = ["#1b1b1b", "#b2182b", "#2166ac", "#1a9850"]


def render_svg(polygons, measures, lo, hi, width: int = 640, dots: int = 4000, title: str = "") -> str:
    """SVG text for polygon records ``{"cell", "vertices"}`` over sample dots.

    ``lo``/``hi`` give the plotted window; y points up.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    span = hi - lo
    height = int(round(width * span[1] / span[0]))
    margin = 10

    def tx(pts):
        pts = np.atleast_2d(pts)
        x = margin + (pts[:, 0] - lo[0]) / span[0] * width
        y = margin + (hi[1] - pts[:, 1]) / span[1] * height
        return np.c_[x, y]

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width + 2 * margin}" height="{height + 2 * margin}">',
    ]
    if title:
        out.append(f"<title>{escape(title)}</title>")
    out.append(f'<rect x="0" y="0" width="{width + 2 * margin}" height="{height + 2 * margin}" fill="white"/>')
    out.append('<g id="cells" stroke="black" stroke-width="1.2" fill-opacity="0.25">')
    for rec in polygons:
        verts = np.asarray(rec["vertices"], dtype=float)
        if verts.shape[0] < 3:
            continue
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in tx(verts))
        color = PART_COLORS[rec["cell"] % len(PART_COLORS)]
        out.append(f'<polygon data-cell="{rec["cell"]}" points="{pts}" fill="{color}"/>')
    out.append("</g>")
    for i, m in enumerate(measures):
        step = max(1, m.n_samples // dots)
        pts = tx(m.samples[::step][:dots])
        color = DOT_COLORS[i % len(DOT_COLORS)]
        out.append(f'<g id="measure-{i}" fill="{color}" fill-opacity="0.35">')
        out.extend(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="0.9"/>' for x, y in pts)
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
