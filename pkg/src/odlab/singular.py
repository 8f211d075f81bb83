"""Singular set of the distance, superdifferentials and the generalized gradient flow.

Reachable gradients at a point are read off from short backtraces started on a
small ring around it: each trace follows one minimizer, and minus its unit
initial velocity is a reachable gradient.  Clustering the directions gives the
finite set ``D*d``; its convex hull is ``D+d`` and the flow moves along the
element of least norm.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from . import kernels
from .config import DEFAULT, Thresholds
from .eikonal import DistanceField, source_ball
from .errors import DomainError, GeometryError, PreconditionError
from .scene import ConvexHull2D, Scene, convex_hull_2d, monotone_chain
from .tracer import _direction_field

log = logging.getLogger(__name__)

N_STARTS = 8


@dataclass(frozen=True)
class GradientSet:
    reachables: np.ndarray  # (k, 2)
    hull: np.ndarray  # polygon vertices (or the reachables when k < 3)
    min_norm_point: np.ndarray
    is_singular: bool
    n_traces: int = 0

    @property
    def min_norm(self) -> float:
        return float(np.linalg.norm(self.min_norm_point))


def min_norm_element(points) -> np.ndarray:
    """Projection of the origin onto the convex hull of a few 2D points."""
    P = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(P) == 0:
        raise DomainError("empty point set")
    if len(P) >= 3:
        try:
            hull = monotone_chain(P)
        except GeometryError:  # duplicates or collinear: the segment search below covers it
            hull = None
        if hull is not None and ConvexHull2D(hull).contains(np.zeros(2)):
            return np.zeros(2)
    best = P[int(np.argmin(np.sum(P * P, axis=1)))]
    for i in range(len(P)):
        for j in range(i + 1, len(P)):
            a, b = P[i], P[j]
            ab = b - a
            den = float(ab @ ab)
            if den < 1e-30:
                continue
            t = min(1.0, max(0.0, float(-(a @ ab)) / den))
            q = a + t * ab
            if q @ q < best @ best:
                best = q
    return best


def cluster_directions(vectors, cluster_deg: float) -> list:
    """Circular single-linkage clustering of unit vectors; returns lists of member indices."""
    V = np.asarray(vectors, dtype=float).reshape(-1, 2)
    if len(V) == 0:
        return []
    ang = np.arctan2(V[:, 1], V[:, 0])
    order = np.argsort(ang)
    a = ang[order]
    gaps = np.diff(np.concatenate([a, [a[0] + 2 * np.pi]]))
    thr = math.radians(cluster_deg)
    cuts = np.flatnonzero(gaps > thr)
    if len(cuts) == 0:
        return [list(order)]
    groups = []
    start = (cuts[-1] + 1) % len(a)
    cur = []
    for k in range(len(a)):
        idx = (start + k) % len(a)
        cur.append(int(order[idx]))
        if idx in cuts:
            groups.append(cur)
            cur = []
    if cur:
        groups.append(cur)
    return groups


def _ring(x, radius: float) -> np.ndarray:
    # half-step angular offset keeps starts off axis-aligned symmetry lines
    th = (np.arange(N_STARTS) + 0.5) * (2 * np.pi / N_STARTS)
    return x + radius * np.stack([np.cos(th), np.sin(th)], axis=-1)


def _parallel_starts(obstacle, x, offset: float, lift: float) -> np.ndarray:
    """Starts shifted tangentially along the level set through ``x``.

    A ring around a point next to the obstacle would sample gradients a
    distance ``offset`` off the boundary, where they still carry a normal
    component of order ``sqrt(offset)``; staying on the level set avoids that.
    """
    level = max(float(obstacle.phi(x)), 0.0) + lift
    nu = obstacle.grad(x)
    nu = nu / np.linalg.norm(nu)
    tau = np.array([-nu[1], nu[0]])
    out = []
    for s in (-offset, -0.5 * offset, 0.5 * offset, offset):
        p = x + s * tau
        for _ in range(3):
            g = obstacle.grad(p)
            p = p - (float(obstacle.phi(p)) - level) * g / float(g @ g)
        out.append(p)
    return np.array(out)


def reachable_gradients_numeric(field_: DistanceField, scene: Scene, x,
                                thresholds: Thresholds = DEFAULT) -> GradientSet:
    """Multi-start estimate of ``D*d(x)`` with hull and minimal-norm element."""
    x = np.asarray(x, dtype=float)
    h = field_.h
    if np.linalg.norm(x - field_.k0) <= field_.init_radius:
        raise DomainError("x lies in the source ball")
    if float(scene.phi(x)) < 0:
        raise DomainError("x lies inside the obstacle")
    o = field_.grid.origin
    offset = thresholds.start_offset_cells * h
    starts = _ring(x, offset)
    if scene.obstacle is not None and float(scene.obstacle.phi(x)) < offset:
        starts = _parallel_starts(scene.obstacle, x, offset, 0.01 * h)
    keep = []
    for s in starts:
        if not field_.grid.contains(s):
            continue
        if kernels.interp_plain(field_.phi, s[0], s[1], o[0], o[1], h) < 0:
            continue
        if np.isfinite(field_.value_at(s)):
            keep.append(s)
    if not keep:
        raise DomainError("degenerate point: every start lies in the obstacle or outside the grid")
    starts = np.ascontiguousarray(keep)
    vx, vy = _direction_field(field_, scene.metric)
    px, py = field_.phi_gradient
    step = 0.5 * h
    n_steps = max(2, int(round(thresholds.probe_cells * h / step)))
    dirs = np.empty((len(starts), 2))
    status = np.empty(len(starts), dtype=np.int64)
    kernels.initial_directions_kernel(vx, vy, field_.phi, px, py, o[0], o[1], h, starts,
                                      field_.k0[0], field_.k0[1], field_.init_radius, step, n_steps,
                                      dirs, status)
    ok = np.isfinite(dirs).all(axis=1)
    if not ok.any():
        raise DomainError("degenerate point: all traces are trapped")
    V = dirs[ok]
    if scene.metric.is_isotropic:
        P = -V
    else:
        A = scene.metric.A(x)
        P = -(V @ A.T)
        P /= np.sqrt(np.einsum("ni,ij,nj->n", V, A, V))[:, None]
    groups = cluster_directions(P, thresholds.cluster_deg)
    reps = []
    for g in groups:
        m = P[g].mean(axis=0)
        reps.append(m / np.linalg.norm(m) * np.mean(np.linalg.norm(P[g], axis=1)))
    R = np.array(reps)
    try:
        hull = monotone_chain(R) if len(R) >= 3 else R
    except GeometryError:
        hull = R
    return GradientSet(R, hull, min_norm_element(R), len(R) >= 2, int(ok.sum()))


# -- singular set ------------------------------------------------------------------


def _exclusion(field_: DistanceField, scene: Scene, thresholds: Thresholds) -> np.ndarray:
    h = field_.h
    excl = ~field_.free | ~np.isfinite(field_.values)
    excl |= source_ball(field_, max(field_.init_radius, thresholds.source_exclusion_cells * h))
    if scene.obstacle is not None:
        pts = field_.grid.points
        for c in scene.obstacle.corners:
            excl |= np.linalg.norm(pts - c, axis=-1) <= thresholds.corner_exclusion_cells * h
    return excl


def flag_direction_jumps(field_: DistanceField, jump_deg: float) -> np.ndarray:
    gx, gy, _ = field_.gradient_field
    flags = np.zeros(field_.values.shape, dtype=np.bool_)
    kernels.direction_jump_kernel(gx, gy, math.cos(math.radians(jump_deg)), flags)
    return flags


def detect_singular_set(field_: DistanceField, scene: Scene, thresholds: Thresholds = DEFAULT) -> np.ndarray:
    """Confirmed singular cells: gradient-jump candidates with two or more reachable gradients."""
    flags = flag_direction_jumps(field_, thresholds.jump_deg) & ~_exclusion(field_, scene, thresholds)
    mask = np.zeros_like(flags)
    pts = field_.grid.points
    for i, j in zip(*np.nonzero(flags)):
        try:
            gs = reachable_gradients_numeric(field_, scene, pts[i, j], thresholds)
        except DomainError:
            continue
        mask[i, j] = gs.is_singular
    return mask


def mask_cells(field_: DistanceField, mask: np.ndarray) -> np.ndarray:
    """Cell-center coordinates of a mask, in row-major order."""
    return field_.grid.points[mask]


def boundary_singular_points(field_: DistanceField, scene: Scene, mask: np.ndarray,
                             within_cells: float = 2.0) -> list:
    """One representative per connected group of confirmed cells touching the obstacle."""
    if scene.obstacle is None:
        return []
    near = mask & (field_.phi <= within_cells * field_.h)
    labels, n = ndimage.label(near, structure=np.ones((3, 3)))
    out = []
    for k in range(1, n + 1):
        idx = np.argwhere(labels == k)
        best = min(idx, key=lambda ij: (field_.phi[ij[0], ij[1]], ij[0], ij[1]))
        out.append(field_.grid.points[best[0], best[1]].copy())
    return out


# -- flow -------------------------------------------------------------------------


@dataclass
class SingularArc:
    times: np.ndarray
    points: np.ndarray
    d_values: np.ndarray
    hull_dist: np.ndarray
    speeds: np.ndarray
    stop_reason: str
    flagged: bool = False
    seeded_from: Optional[np.ndarray] = None

    def rows(self) -> list:
        return [{"t": float(t), "x": float(p[0]), "y": float(p[1]), "d": float(d), "hull_dist": float(q)}
                for t, p, d, q in zip(self.times, self.points, self.d_values, self.hull_dist)]


def _hull_or_none(scene: Scene) -> Optional[ConvexHull2D]:
    return convex_hull_2d(scene) if scene.obstacle is not None else None


def integrate_singular_flow(field_: DistanceField, scene: Scene, x0, t_max: float,
                            thresholds: Thresholds = DEFAULT, hull: Optional[ConvexHull2D] = None,
                            boundary_seed: Optional[bool] = None) -> SingularArc:
    """Explicit Euler for ``x' = min-norm element of D+d(x)`` with ``dt = h``.

    Starting points on the obstacle boundary are first moved one cell along the
    outward normal.  Integration stops at ``t_max``, on leaving the grid, at
    a critical point inside the convex hull of the obstacle, or when the next
    step would enter the obstacle (``"obstacle"``).
    """
    if t_max <= 0:
        raise PreconditionError("t_max must be positive")
    h = field_.h
    x = np.asarray(x0, dtype=float).copy()
    seeded = None
    if hull is None:
        hull = _hull_or_none(scene)
    if scene.obstacle is not None:
        on_boundary = float(scene.obstacle.phi(x)) <= h
        if boundary_seed or (boundary_seed is None and on_boundary):
            seeded = x.copy()
            x = scene.obstacle.project(x) + h * scene.obstacle.normal(x)
    margin = (thresholds.start_offset_cells + 1) * h
    lo = field_.grid.origin + margin
    hi = field_.grid.upper - margin
    times, pts, dvals, hd, speeds = [], [], [], [], []
    t = 0.0
    lost = 0
    flagged = False
    reason = "t_max"
    while True:
        try:
            gs = reachable_gradients_numeric(field_, scene, x, thresholds)
        except DomainError:
            reason = "degenerate"
            break
        p = gs.min_norm_point
        times.append(t)
        pts.append(x.copy())
        dvals.append(field_.value_at(x))
        hd.append(hull.distance(x) if hull is not None else 0.0)
        speeds.append(float(np.linalg.norm(p)))
        lost = 0 if gs.is_singular else lost + 1
        if lost > thresholds.flow_lost_steps and not flagged:
            flagged = True
            log.warning("flow arc left the singular set near %s", np.round(x, 4))
        if speeds[-1] < thresholds.p_eps and hull is not None and hull.contains(x, tol=h):
            reason = "critical"
            break
        if t + h > t_max + 1e-12:
            break
        nxt = x + h * p
        if float(scene.phi(nxt)) < 0:
            reason = "obstacle"
            break
        x = nxt
        t += h
        if np.any(x < lo) or np.any(x > hi):
            times.append(t)
            pts.append(x.copy())
            dvals.append(field_.value_at(x))
            hd.append(hull.distance(x) if hull is not None else 0.0)
            speeds.append(speeds[-1])
            reason = "bbox"
            break
    return SingularArc(np.array(times), np.array(pts), np.array(dvals), np.array(hd), np.array(speeds),
                       reason, flagged, seeded)


# -- experiments --------------------------------------------------------------


@dataclass(frozen=True)
class HullSearch:
    points: np.ndarray  # hull boundary samples near the singular mask
    argmax_point: np.ndarray
    argmax_value: float


def hull_singularity_search(field_: DistanceField, scene: Scene, mask: np.ndarray,
                            within_cells: float = 2.0, hull: Optional[ConvexHull2D] = None) -> HullSearch:
    """Points of the hull boundary within ``within_cells`` of a confirmed singular cell."""
    if scene.obstacle is None:
        raise PreconditionError("the search needs a nonempty obstacle")
    hull = convex_hull_2d(scene) if hull is None else hull
    h = field_.h
    samples = hull.boundary_points(0.5 * h)
    cells = mask_cells(field_, mask)
    near = np.zeros(len(samples), dtype=bool)
    if len(cells):
        from scipy.spatial import cKDTree

        dist, _ = cKDTree(cells).query(samples)
        near = dist <= within_cells * h + 1e-12
    vals = field_.values_at(samples)
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    k = int(np.argmax(vals))
    return HullSearch(samples[near], samples[k].copy(), float(vals[k]))


@dataclass
class PropagationStats:
    x0: np.ndarray
    radius: float
    n_annulus: int
    chain_reach: float
    chain_ok: bool
    chain_outside_obstacle: bool
    chain: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))

    def as_dict(self) -> dict:
        return {"x0": [float(v) for v in self.x0], "radius": self.radius, "n_annulus": self.n_annulus,
                "chain_reach": self.chain_reach, "chain_ok": self.chain_ok,
                "chain_outside_obstacle": self.chain_outside_obstacle, "chain_cells": int(len(self.chain))}


def local_propagation_probe(field_: DistanceField, scene: Scene, x0, radius: float,
                            mask: np.ndarray, seed_cells: float = 2.0) -> PropagationStats:
    """Connected chain of confirmed cells leaving ``x0`` through the annulus ``h < |x - x0| < radius``."""
    x0 = np.asarray(x0, dtype=float)
    h = field_.h
    pts = field_.grid.points
    dist = np.linalg.norm(pts - x0, axis=-1)
    seeds = np.argwhere(mask & (dist <= seed_cells * h + 1e-12))
    if len(seeds) == 0:
        raise PreconditionError("x0 is not a confirmed singular point")
    inside = mask & (dist < radius)
    n_annulus = int(np.count_nonzero(inside & (dist > h)))
    seen = np.zeros_like(mask)
    q = deque()
    for i, j in seeds:
        seen[i, j] = True
        q.append((int(i), int(j)))
    nx, ny = mask.shape
    while q:
        i, j = q.popleft()
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                ii, jj = i + di, j + dj
                if 0 <= ii < nx and 0 <= jj < ny and inside[ii, jj] and not seen[ii, jj]:
                    seen[ii, jj] = True
                    q.append((ii, jj))
    chain = pts[seen]
    reach = float(dist[seen].max())
    outside = bool(np.all(field_.phi[seen & (dist > h)] >= 0))
    return PropagationStats(x0, float(radius), n_annulus, reach, reach >= radius - 2 * h, outside, chain)
