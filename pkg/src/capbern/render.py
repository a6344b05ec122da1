"""SVG contour plots of 2D fields."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from skimage.measure import find_contours

from .errors import Degenerate
from .grid import ScalarField, free_boundary


@dataclass(frozen=True)
class Contour:
    level: float
    points: np.ndarray  # (m, 2) world coordinates

    @property
    def closed(self) -> bool:
        return len(self.points) > 2 and bool(np.allclose(self.points[0], self.points[-1]))

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))


def _contour_values(f: ScalarField, level: float) -> np.ndarray:
    """``f - level`` with nodes sitting exactly on the level replaced by minus their distance to the interface.

    Contours then bound ``{f > level}`` and follow the extrapolated interface
    instead of the grid staircase of a flat plateau.
    """
    g = f.values - level
    flat = g == 0
    if not flat.any():
        return g
    try:
        d = free_boundary(f, level).dist.values
    except Degenerate:
        return g
    return np.where(flat, -np.abs(d), g)


def contours(f: ScalarField, levels: Sequence[float]) -> list[Contour]:
    """Marching-squares polylines, sorted by level and then by starting point."""
    if f.grid.dim != 2:
        raise ValueError("contours need a 2D field")
    g = f.grid
    out = []
    for lev in levels:
        paths = find_contours(_contour_values(f, float(lev)), 0.0)
        world = [np.asarray(g.lo) + g.h * p for p in paths]
        world.sort(key=lambda p: (round(p[0, 0], 12), round(p[0, 1], 12), len(p)))
        out += [Contour(float(lev), p) for p in world]
    return out


def render_svg(f: ScalarField, levels: Sequence[float], size: int = 512) -> str:
    g = f.grid
    if g.dim != 2:
        raise ValueError("rendering needs a 2D field")
    w = g.hi[0] - g.lo[0]
    ht = g.hi[1] - g.lo[1]
    s = size / max(w, ht)
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w * s:.3f}" height="{ht * s:.3f}" '
        f'viewBox="0 0 {w * s:.3f} {ht * s:.3f}">',
        f'<rect x="0" y="0" width="{w * s:.3f}" height="{ht * s:.3f}" fill="white" stroke="black"/>',
    ]
    for lev in levels:
        lines.append(f'<g class="level" data-level="{float(lev)!r}" fill="none" stroke="black" stroke-width="1">')
        for c in contours(f, [lev]):
            # x_1 horizontal, x_2 upward
            pts = " ".join(f"{(x - g.lo[0]) * s:.4f},{(g.hi[1] - y) * s:.4f}" for x, y in c.points)
            lines.append(f'<polyline points="{pts}"/>')
        lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
