"""Closed-form distance, minimizers and reachable gradients around a disk obstacle.

Shortest paths around a disk are a tangent segment, a boundary arc and a second
tangent segment (or a single straight segment when the target is visible).
Everything here is exact up to floating point and serves as ground truth for the
grid solvers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError

TIE_TOL = 1e-12


@dataclass(frozen=True)
class DiskScene:
    center: np.ndarray
    R: float
    k0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "k0", np.asarray(self.k0, dtype=float))
        object.__setattr__(self, "R", float(self.R))
        if np.linalg.norm(self.k0 - self.center) <= self.R:
            raise DomainError("k0 must lie strictly outside the disk")

    @classmethod
    def from_scene(cls, scene) -> "DiskScene":
        obs = scene.obstacle
        if obs is None or obs.kind != "disk":
            raise DomainError("scene obstacle is not a disk")
        return cls(obs.center, obs.radius, scene.k0)


@dataclass(frozen=True)
class TangentArcPath:
    """``x -> t1`` (segment), arc ``t1 -> t2`` on the circle, ``t2 -> k0`` (segment).

    A straight unobstructed path has ``arc is None`` and ``t1 == t2 == k0``.
    ``arc`` is ``(theta1, dtheta)``: start angle and signed swept angle.
    """

    x: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    k0: np.ndarray
    center: np.ndarray
    R: float
    arc: Optional[tuple[float, float]]
    total_length: float

    @property
    def leg1_length(self) -> float:
        return float(np.linalg.norm(self.t1 - self.x))

    @property
    def leg2_length(self) -> float:
        return float(np.linalg.norm(self.k0 - self.t2))

    @property
    def arc_length(self) -> float:
        return 0.0 if self.arc is None else self.R * abs(self.arc[1])

    def initial_velocity(self) -> np.ndarray:
        """Unit right-derivative of the path at ``x``."""
        if self.leg1_length > 1e-14:
            v = self.t1 - self.x
            return v / np.linalg.norm(v)
        th, dth = self.arc
        return np.sign(dth) * np.array([-np.sin(th), np.cos(th)])

    def sample(self, step: float) -> np.ndarray:
        """Polyline through the path with spacing at most ``step`` (arc length)."""
        pieces = [_segment(self.x, self.t1, step)]
        if self.arc is not None:
            th, dth = self.arc
            n = max(2, int(np.ceil(self.R * abs(dth) / step)) + 1)
            ang = th + np.linspace(0.0, dth, n)
            pieces.append(self.center + self.R * np.stack([np.cos(ang), np.sin(ang)], axis=-1))
        pieces.append(_segment(self.t2, self.k0, step))
        pts = np.concatenate(pieces)
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-14
        return pts[keep]


def _segment(a, b, step):
    n = max(2, int(np.ceil(np.linalg.norm(b - a) / step)) + 1)
    return a + np.linspace(0.0, 1.0, n)[:, None] * (b - a)


def _angle(v) -> float:
    a = float(np.arctan2(v[1], v[0]))
    return a if a > -np.pi else np.pi


def _visible(ds: DiskScene, x: np.ndarray) -> bool:
    """True iff the segment [x, k0] misses the open disk."""
    d = ds.k0 - x
    dd = float(d @ d)
    t = 0.0 if dd == 0 else float(np.clip((ds.center - x) @ d / dd, 0.0, 1.0))
    return float(np.linalg.norm(x + t * d - ds.center)) >= ds.R * (1 - 1e-15)


def _check_point(ds: DiskScene, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.linalg.norm(x - ds.center) < ds.R * (1 - 1e-12):
        raise DomainError("point lies strictly inside the disk")
    return x


def _wrap_paths(ds: DiskScene, x: np.ndarray) -> list[TangentArcPath]:
    """The two candidate wrapping paths (counterclockwise first, then clockwise)."""
    c, R = ds.center, ds.R
    a = max(float(np.linalg.norm(x - c)), R)
    b = float(np.linalg.norm(ds.k0 - c))
    ax, bx = np.arccos(min(R / a, 1.0)), np.arccos(min(R / b, 1.0))
    th_x = _angle(x - c)
    th_k = _angle(ds.k0 - c)
    gap_ccw = (th_k - th_x) % (2 * np.pi)
    out = []
    for sgn, gap in ((1.0, gap_ccw), (-1.0, 2 * np.pi - gap_ccw)):
        sweep = gap - ax - bx
        if sweep < 0:
            continue
        th1 = th_x + sgn * ax
        th2 = th_k - sgn * bx
        t1 = c + R * np.array([np.cos(th1), np.sin(th1)])
        t2 = c + R * np.array([np.cos(th2), np.sin(th2)])
        length = np.sqrt(a * a - R * R) + R * sweep + np.sqrt(b * b - R * R)
        out.append(TangentArcPath(x, t1, t2, ds.k0, c, R, (th1, sgn * sweep), float(length)))
    return out


def disk_minimizers(ds: DiskScene, x) -> list[TangentArcPath]:
    """All global length minimizers from ``x`` to ``k0``."""
    x = _check_point(ds, x)
    if _visible(ds, x):
        L = float(np.linalg.norm(ds.k0 - x))
        return [TangentArcPath(x, ds.k0.copy(), ds.k0.copy(), ds.k0, ds.center, ds.R, None, L)]
    paths = _wrap_paths(ds, x)
    best = min(p.total_length for p in paths)
    return [p for p in paths if p.total_length <= best + TIE_TOL * max(1.0, best)]


def disk_distance(ds: DiskScene, x) -> float:
    return disk_minimizers(ds, x)[0].total_length


def disk_distance_many(ds: DiskScene, pts) -> np.ndarray:
    """Vectorized :func:`disk_distance`; points inside the disk map to ``inf``."""
    pts = np.asarray(pts, dtype=float)
    c, R, k0 = ds.center, ds.R, ds.k0
    v = pts - c
    a = np.sqrt(np.sum(v * v, axis=-1))
    inside = a < R * (1 - 1e-12)
    a = np.maximum(a, R)
    b = float(np.linalg.norm(k0 - c))
    # visibility: distance from center to segment [x, k0]
    d = k0 - pts
    dd = np.sum(d * d, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.clip(np.sum((c - pts) * d, axis=-1) / dd, 0.0, 1.0)
    t = np.where(dd > 0, t, 0.0)
    closest = pts + t[..., None] * d
    visible = np.sqrt(np.sum((closest - c) ** 2, axis=-1)) >= R * (1 - 1e-15)
    straight = np.sqrt(dd)
    th_x = np.arctan2(v[..., 1], v[..., 0])
    th_k = np.arctan2(k0[1] - c[1], k0[0] - c[0])
    gap = np.abs((th_k - th_x + np.pi) % (2 * np.pi) - np.pi)
    wrap = np.sqrt(a * a - R * R) + np.sqrt(b * b - R * R) + R * (gap - np.arccos(R / a) - np.arccos(R / b))
    out = np.where(visible, straight, wrap)
    return np.where(inside, np.inf, out)


def disk_reachable_gradients(ds: DiskScene, x) -> np.ndarray:
    """Reachable gradients as rows: minus the initial velocity of every minimizer."""
    x = _check_point(ds, x)
    if np.linalg.norm(x - ds.k0) < 1e-14:
        raise DomainError("the distance is not differentiable at the target")
    return np.array([-p.initial_velocity() for p in disk_minimizers(ds, x)])


def symmetry_ray_point(ds: DiskScene, t: float) -> np.ndarray:
    """Point on the ray of two-minimizer points, ``t >= R`` from the center."""
    u = (ds.k0 - ds.center) / np.linalg.norm(ds.k0 - ds.center)
    return ds.center - t * u


# -- the involute construction ---------------------------------------------


def involute_curve(R: float, r):
    """``c(r) = g(r) - r g'(r)`` with ``g(r) = R e^{ir}``, in the frame where g(0) = (R, 0)."""
    r = np.asarray(r, dtype=float)
    return R * np.stack([np.cos(r) + r * np.sin(r), np.sin(r) - r * np.cos(r)], axis=-1)


def involute_curvature(R: float, r: float) -> float:
    if r <= 0:
        raise DomainError("involute curvature blows up at the cusp r = 0")
    return 1.0 / (R * r)


def involute_curvature_fd(R: float, r: float, step: float = 1e-4) -> float:
    """Curvature of :func:`involute_curve` from central differences of the curve itself."""
    p = involute_curve(R, np.array([r - step, r, r + step]))
    d1 = (p[2] - p[0]) / (2 * step)
    d2 = (p[2] - 2 * p[1] + p[0]) / step**2
    return abs(d1[0] * d2[1] - d1[1] * d2[0]) / np.linalg.norm(d1) ** 3


# -- optimality of the 1/2 exponent ----------------------------------------


@dataclass
class DefectScan:
    alphas: list
    r_values: list
    lhs: np.ndarray  # (n_alpha, n_r)
    rhs: np.ndarray
    ratio: np.ndarray
    slopes: np.ndarray  # d log(ratio) / d log(1/r) per alpha
    bounded: np.ndarray

    def as_rows(self) -> list[dict]:
        rows = []
        for i, a in enumerate(self.alphas):
            for j, r in enumerate(self.r_values):
                rows.append({"alpha": a, "r": r, "lhs": self.lhs[i, j], "rhs": self.rhs[i, j],
                             "ratio": self.ratio[i, j]})
        return rows


def corollary_defect_scan(alphas: Sequence[float], r_values: Sequence[float], C: float = 1.0,
                          slope_tol: float = 0.05) -> DefectScan:
    """Tabulate both sides of the involute test inequality for the unit disk.

    ``lhs = r^-a (sin r / r - cos r)`` and
    ``rhs = C |((cos r - 1)/r + sin r, sin r / r - cos r)|^(1+a)``.  The ratio is
    bounded as r -> 0 exactly when ``a <= 1/2``; the slope of log(ratio) against
    log(1/r) is reported (growth slope, ``2a - 1`` asymptotically).
    """
    a = np.asarray(alphas, dtype=float)[:, None]
    r = np.asarray(r_values, dtype=float)[None, :]
    core = np.sin(r) / r - np.cos(r)
    lhs = r ** (-a) * core
    vec = np.hypot((np.cos(r) - 1) / r + np.sin(r), core)
    rhs = C * vec ** (1 + a)
    ratio = lhs / rhs
    logr = np.log(1.0 / r[0])
    slopes = np.array([np.polyfit(logr, np.log(row), 1)[0] for row in ratio])
    return DefectScan(list(map(float, alphas)), list(map(float, r_values)), lhs, rhs, ratio, slopes,
                      np.abs(slopes) < slope_tol)


# -- tables -------------------------------------------------------------------


def oracle_table(ds: DiskScene, points) -> str:
    """CSV rows ``x, y, d_oracle, n_minimizers, grads`` with gradients as ``gx gy`` pairs joined by ``;``."""
    lines = ["x,y,d_oracle,n_minimizers,grads"]
    for p in np.asarray(points, dtype=float).reshape(-1, 2):
        if np.linalg.norm(p - ds.center) <= ds.R or np.linalg.norm(p - ds.k0) < 1e-12:
            continue
        paths = disk_minimizers(ds, p)
        grads = ";".join(f"{-v[0]:.12g} {-v[1]:.12g}" for v in (q.initial_velocity() for q in paths))
        lines.append(f"{p[0]:.10g},{p[1]:.10g},{paths[0].total_length:.17g},{len(paths)},{grads}")
    return "\n".join(lines) + "\n"
