"""Deterministic SVG figures: obstacle, distance contours, singular cells and flow arcs."""

from __future__ import annotations

from typing import Optional, Sequence

import contourpy
import numpy as np

from .eikonal import DistanceField
from .errors import UnsupportedError
from .scene import Scene

SIZE = 640


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Frame:
    def __init__(self, bbox: np.ndarray):
        self.lo = bbox[0]
        span = bbox[1] - bbox[0]
        self.scale = SIZE / float(span.max())
        self.height = float(span[1]) * self.scale
        self.width = float(span[0]) * self.scale

    def xy(self, p) -> str:
        x = (p[0] - self.lo[0]) * self.scale
        y = self.height - (p[1] - self.lo[1]) * self.scale
        return f"{_fmt(x)},{_fmt(y)}"

    def poly(self, pts) -> str:
        return " ".join(self.xy(p) for p in pts)


def _check_2d(name: str, arr: Optional[np.ndarray], ndim: int):
    if arr is not None and np.asarray(arr).ndim != ndim:
        raise UnsupportedError(f"{name} must be a {ndim}-dimensional array for a 2D figure")


def render_svg(scene: Scene, field_: Optional[DistanceField] = None, mask: Optional[np.ndarray] = None,
               arcs: Sequence[np.ndarray] = (), levels: Optional[Sequence[float]] = None,
               path=None) -> str:
    """Return the SVG text, also written to ``path`` when given."""
    if len(scene.k0) != 2:
        raise UnsupportedError("only 2D scenes can be rendered")
    _check_2d("mask", mask, 2)
    for a in arcs:
        _check_2d("arc", a, 2)
    fr = _Frame(scene.bbox)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(fr.width)}" height="{_fmt(fr.height)}" '
           f'viewBox="0 0 {_fmt(fr.width)} {_fmt(fr.height)}">',
           f'<rect width="{_fmt(fr.width)}" height="{_fmt(fr.height)}" fill="white"/>']
    if field_ is not None:
        vals = np.where(np.isfinite(field_.values), field_.values, np.nan)
        if levels is None:
            top = float(np.nanmax(vals))
            levels = np.arange(0.25, top, 0.25)
        xs, ys = field_.grid.axes
        gen = contourpy.contour_generator(xs, ys, vals.T)
        out.append('<g fill="none" stroke="#3465a4" stroke-width="0.8">')
        for lev in levels:
            for line in gen.lines(float(lev)):
                if len(line) >= 2:
                    out.append(f'<polyline points="{fr.poly(line)}"/>')
        out.append("</g>")
    if scene.obstacle is not None:
        pts = scene.obstacle.boundary_samples(360)
        out.append(f'<polygon points="{fr.poly(pts)}" fill="#888a85" stroke="black" stroke-width="1"/>')
    if mask is not None and field_ is not None and mask.any():
        s = max(field_.h * fr.scale, 1.0)
        out.append('<g fill="#cc0000">')
        for p in field_.grid.points[mask]:
            x, y = fr.xy(p).split(",")
            out.append(f'<rect x="{_fmt(float(x) - s / 2)}" y="{_fmt(float(y) - s / 2)}" '
                       f'width="{_fmt(s)}" height="{_fmt(s)}"/>')
        out.append("</g>")
    if len(arcs):
        out.append('<g fill="none" stroke="#4e9a06" stroke-width="1.6">')
        for a in arcs:
            out.append(f'<polyline points="{fr.poly(a)}"/>')
        out.append("</g>")
    x, y = fr.xy(scene.k0).split(",")
    out.append(f'<circle cx="{x}" cy="{y}" r="4" fill="#f57900"/>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
