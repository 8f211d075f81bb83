"""Fractional semiconcavity defects and exponent fits.

The defect of ``u`` on a pair is ``lam u(x) + (1 - lam) u(y) - u(lam x + (1 - lam) y)``.
A semiconcave function of exponent ``alpha`` keeps it below
``C lam (1 - lam) |x - y|^(1 + alpha)``.  Fits sample families of pairs that
share an anchor and a direction and differ only in separation, and estimate
the common log-log slope of ``max_lam defect / (lam (1 - lam))`` with a
separate intercept per family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import kernels
from .config import DEFAULT, Thresholds
from .eikonal import DistanceField, obstacle_collar, source_ball
from .errors import DomainError, PreconditionError, UnsupportedError
from .oracle import DiskScene, disk_distance_many
from .scene import Region, Scene, classify_region

LAMBDAS = (0.25, 0.5, 0.75)
REGIONS = ("interior", "boundary_S", "boundary_I")
SEGMENT_SAMPLES = 16

Field = Union[DistanceField, Callable]


@dataclass(frozen=True)
class DefectSample:
    x: tuple
    y: tuple
    lam: float
    defect: float
    separation: float


@dataclass(frozen=True)
class ExponentFit:
    region_tag: str
    alpha_hat: float
    C_hat: float
    r2: float
    n_samples: int
    separations: tuple = (math.nan, math.nan)
    verdict: str = "inconclusive"

    def as_dict(self) -> dict:
        return {"region": self.region_tag, "alpha_hat": self.alpha_hat, "C_hat": self.C_hat, "r2": self.r2,
                "n": self.n_samples, "separations": list(self.separations), "verdict": self.verdict}


def _evaluator(u: Field) -> Callable:
    if isinstance(u, DistanceField):
        return u.values_at
    return lambda pts: np.asarray(u(np.asarray(pts, dtype=float)), dtype=float)


def _segment_free(field_: DistanceField, x, y) -> bool:
    o = field_.grid.origin
    for t in np.linspace(0.0, 1.0, SEGMENT_SAMPLES + 1):
        p = (1 - t) * x + t * y
        if not field_.grid.contains(p):
            return False
        if kernels.interp_plain(field_.phi, p[0], p[1], o[0], o[1], field_.h) < 0:
            return False
    return True


def sc_defect(u: Field, x, y, lam: float) -> DefectSample:
    """Defect of ``u`` on the pair; ``u`` is a solved field or any vectorized scalar function."""
    if not 0.0 <= lam <= 1.0:
        raise PreconditionError("lambda must lie in [0, 1]")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if isinstance(u, DistanceField):
        if not _segment_free(u, x, y):
            raise PreconditionError("segment [x, y] crosses the obstacle or leaves the grid")
        src = u.init_radius
        if min(np.linalg.norm(x - u.k0), np.linalg.norm(y - u.k0)) <= src:
            raise PreconditionError("endpoints must stay out of the source ball")
    v = _evaluator(u)(np.array([x, y, lam * x + (1 - lam) * y]))
    defect = float(lam * v[0] + (1 - lam) * v[1] - v[2])
    return DefectSample(tuple(map(float, x)), tuple(map(float, y)), float(lam), defect,
                        float(np.linalg.norm(x - y)))


def _max_normalized(evaluate: Callable, x: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """``max_lam defect / (lam (1 - lam))`` for the pairs ``(x, Y[k])``."""
    n = len(Y)
    pts = [np.repeat(x[None], n, axis=0), Y]
    for lam in LAMBDAS:
        pts.append(lam * x + (1 - lam) * Y)
    v = evaluate(np.concatenate(pts)).reshape(len(pts), n)
    best = np.full(n, -np.inf)
    for k, lam in enumerate(LAMBDAS):
        best = np.maximum(best, (lam * v[0] + (1 - lam) * v[1] - v[2 + k]) / (lam * (1 - lam)))
    return best


def pooled_slope(families: Sequence[tuple]) -> tuple[float, float, float, int]:
    """Common slope of ``log q`` on ``log s`` with one intercept per family.

    ``families`` holds ``(s, q)`` arrays.  Families with a nonpositive entry
    are dropped.  Returns ``(slope, r2, C, n_points)`` where ``C`` is the
    largest family constant ``max q / s^slope``.
    """
    X, Y, kept = [], [], []
    for s, q in families:
        s, q = np.asarray(s, float), np.asarray(q, float)
        if len(s) < 3 or not np.all(np.isfinite(q)) or np.any(q <= 0):
            continue
        ls, lq = np.log(s), np.log(q)
        X.append(ls - ls.mean())
        Y.append(lq - lq.mean())
        kept.append((s, q))
    if not kept:
        return math.nan, math.nan, math.nan, 0
    X, Y = np.concatenate(X), np.concatenate(Y)
    slope = float(X @ Y / (X @ X))
    ss = float(Y @ Y)
    r2 = 1.0 - float(np.sum((Y - slope * X) ** 2)) / ss if ss > 0 else 0.0
    C = max(float(np.max(q / s**slope)) for s, q in kept)
    return slope, r2, C, int(len(X))


# -- pair samplers -------------------------------------------------------------


def _unit(a: float) -> np.ndarray:
    return np.array([math.cos(a), math.sin(a)])


def _interior_anchors(field_: DistanceField, scene: Scene, rng, n: int, smax: float,
                      singular: Optional[np.ndarray], th: Thresholds) -> list:
    h = field_.h
    excl = ~field_.free | ~np.isfinite(field_.values)
    excl |= source_ball(field_, max(field_.init_radius, th.source_exclusion_cells * h) + smax)
    if scene.obstacle is not None:
        excl |= obstacle_collar(field_, th.interior_collar_cells)
    if singular is not None and singular.any():
        from scipy.ndimage import binary_dilation

        excl |= binary_dilation(singular, iterations=max(2, int(math.ceil(smax / h)) + 2))
    ok = np.argwhere(~excl)
    if len(ok) == 0:
        raise DomainError("no interior cells left after exclusions")
    out = []
    for _ in range(40 * n):
        if len(out) >= n:
            break
        i, j = ok[rng.integers(len(ok))]
        x = field_.grid.point(i, j)
        e = _unit(rng.uniform(0, 2 * np.pi))
        y = x + smax * e
        if not field_.grid.contains(y):
            continue
        ii, jj = field_.grid.index_of(y)
        if excl[ii, jj] or not _segment_free(field_, x, y):
            continue
        out.append((x, e))
    return out


def _boundary_anchors(scene: Scene, rng, n: int, region: str, tilt_deg=(10.0, 30.0),
                      avoid: Sequence = (), avoid_radius: float = 0.0,
                      field_: Optional[DistanceField] = None) -> list:
    """Anchors on the obstacle boundary with directions tilted outward from the tangent.

    With a field, anchors are the grid nodes of the first free layer, so the
    anchor value is a node value rather than an interpolation across the
    staircase.  Both tangential orientations are used in equal numbers so that
    odd corrections in the separation cancel in the pooled slope.
    """
    obs = scene.obstacle
    if obs is None:
        raise PreconditionError("boundary regions need an obstacle")
    want = Region.S if region == "boundary_S" else Region.I
    if field_ is None:
        cand = obs.boundary_samples(720)
    else:
        layer = field_.free & (field_.phi < field_.h) & np.isfinite(field_.values)
        cand = field_.grid.points[layer]
    corners = np.asarray(obs.corners).reshape(-1, 2)
    keep = []
    for p in cand:
        if len(corners) and np.min(np.linalg.norm(corners - p, axis=1)) < 0.05:
            continue
        if any(np.linalg.norm(p - a) < avoid_radius for a in avoid):
            continue
        if np.linalg.norm(p - scene.k0) < 0.1:
            continue
        q = p + 1e-9 * obs.normal(p)
        if classify_region(scene, q) is want:
            keep.append(p)
    if not keep:
        raise DomainError(f"no boundary points in the {region} region")
    keep = np.array(keep)
    out = []
    for k in range(n):
        p = keep[rng.integers(len(keep))]
        nu = obs.normal(p)
        tau = np.array([-nu[1], nu[0]]) * (1.0 if k % 2 == 0 else -1.0)
        b = math.radians(rng.uniform(*tilt_deg))
        out.append((p, math.cos(b) * tau + math.sin(b) * nu))
    return out


def _separations(smin: float, smax: float, n: int = 8) -> np.ndarray:
    return np.geomspace(smin, smax, n)


def fit_exponent(u: Field, scene: Scene, region: str, n_pairs: int = 48, seed: int = 0,
                 separations: Optional[Sequence[float]] = None, singular: Optional[np.ndarray] = None,
                 thresholds: Thresholds = DEFAULT, avoid: Sequence = ()) -> ExponentFit:
    """Regional exponent fit on a solved field (grid mode).

    ``n_pairs`` families are sampled, each over the same ladder of separations
    (default 4h to 40h).  ``avoid`` lists points (singular boundary points)
    whose neighbourhood is left out of the boundary regions.
    """
    if region not in REGIONS:
        raise PreconditionError(f"unknown region {region!r}")
    if not isinstance(u, DistanceField):
        raise PreconditionError("grid mode needs a solved field; use fit_exponent_fn for functions")
    h = u.h
    s = np.asarray(separations, float) if separations is not None else _separations(4 * h, 40 * h)
    if s.min() < 4 * h - 1e-12 or s.max() / s.min() < 10 - 1e-9:
        raise PreconditionError("separations must be at least 4h and span a decade")
    rng = np.random.default_rng(seed)
    if region == "interior":
        anchors = _interior_anchors(u, scene, rng, n_pairs, float(s.max()), singular, thresholds)
    else:
        anchors = _boundary_anchors(scene, rng, n_pairs, region, avoid=avoid,
                                    avoid_radius=float(s.max()) + 2 * h, field_=u)
    if len(anchors) < max(3, n_pairs // 2):
        raise DomainError(f"only {len(anchors)} valid pair families for region {region}")
    families = []
    for x, e in anchors:
        Y = x + s[:, None] * e
        if not _segment_free(u, x, Y[-1]):
            continue
        families.append((s, _max_normalized(u.values_at, x, Y)))
    return _finish(region, families, s, thresholds)


def fit_exponent_fn(fn: Callable, scene: Scene, region: str, n_pairs: int = 48, seed: int = 0,
                    separations: Optional[Sequence[float]] = None, thresholds: Thresholds = DEFAULT,
                    avoid: Sequence = (), anchors: Optional[Sequence] = None) -> ExponentFit:
    """Exponent fit for a vectorized function ``fn(points) -> values`` (no grid).

    ``anchors`` may supply ``(x, direction)`` families directly; otherwise
    boundary regions are sampled from the scene and ``interior`` needs them.
    """
    s = np.asarray(separations, float) if separations is not None else _separations(1e-3, 1e-1)
    rng = np.random.default_rng(seed)
    if anchors is None:
        if region == "interior":
            raise PreconditionError("interior fits of a bare function need explicit anchors")
        anchors = _boundary_anchors(scene, rng, n_pairs, region, avoid=avoid,
                                    avoid_radius=float(s.max()) + 1e-3)
    evaluate = _evaluator(fn)
    families = [(s, _max_normalized(evaluate, np.asarray(x, float), np.asarray(x, float) + s[:, None] * e))
                for x, e in anchors]
    return _finish(region, families, s, thresholds)


def oracle_fit(scene: Scene, region: str = "boundary_S", n_pairs: int = 48, seed: int = 0,
               separations: Optional[Sequence[float]] = None, thresholds: Thresholds = DEFAULT) -> ExponentFit:
    """Pure-oracle mode: the closed-form disk distance, no discretization."""
    ds = DiskScene.from_scene(scene)
    sing = ds.center - ds.R * (ds.k0 - ds.center) / np.linalg.norm(ds.k0 - ds.center)
    return fit_exponent_fn(lambda p: disk_distance_many(ds, p), scene, region, n_pairs, seed, separations,
                           thresholds, avoid=[sing])


def _finish(region: str, families: list, s: np.ndarray, th: Thresholds) -> ExponentFit:
    slope, r2, C, n = pooled_slope(families)
    if n == 0:
        return ExponentFit(region, math.nan, math.nan, math.nan, 0, (float(s.min()), float(s.max())))
    verdict = "ok" if r2 >= th.r2_min else "inconclusive"
    return ExponentFit(region, slope - 1.0, C, r2, n, (float(s.min()), float(s.max())), verdict)


def _boundary_families(u: DistanceField, scene: Scene, nodes: np.ndarray, s: np.ndarray, rng) -> list:
    fams = []
    for k, x in enumerate(nodes):
        nu = scene.obstacle.normal(x)
        tau = np.array([-nu[1], nu[0]]) * (1.0 if k % 2 == 0 else -1.0)
        b = math.radians(rng.uniform(10.0, 30.0))
        e = math.cos(b) * tau + math.sin(b) * nu
        Y = x + s[:, None] * e
        if _segment_free(u, x, Y[-1]):
            fams.append((s, _max_normalized(u.values_at, x, Y)))
    return fams


def exponent_map(u: DistanceField, scene: Scene, window: float, stride: Optional[float] = None,
                 seed: int = 0, n_dirs: int = 6, thresholds: Thresholds = DEFAULT) -> tuple:
    """Sliding-window local exponents; returns ``(centers_x, centers_y, alpha)`` with NaN for unknown.

    Separations run over ``4h .. window``.  Windows touching the obstacle use
    families anchored on its first free grid layer, tilted off the tangent.
    Elsewhere pairs are centered on the window, along directions within 45
    degrees of the level line, where the second-order part of the defect is
    largest.
    """
    if not isinstance(u, DistanceField):
        raise UnsupportedError("exponent maps need a solved field")
    h = u.h
    if window < 8 * h - 1e-12:
        raise PreconditionError("window must be at least 8h")
    stride = window if stride is None else stride
    lo, hi = u.grid.origin + window, u.grid.upper - window
    cx = np.arange(lo[0], hi[0] + 1e-12, stride)
    cy = np.arange(lo[1], hi[1] + 1e-12, stride)
    s = np.geomspace(4 * h, window, 6)
    rng = np.random.default_rng(seed)
    gx, gy, _ = u.gradient_field
    o = u.grid.origin
    layer_pts = np.empty((0, 2))
    if scene.obstacle is not None:
        layer_pts = u.grid.points[u.free & (u.phi < h) & np.isfinite(u.values)]
    alpha = np.full((len(cx), len(cy)), np.nan)
    src = max(u.init_radius, thresholds.source_exclusion_cells * h) + window
    for a, x0 in enumerate(cx):
        for b, y0 in enumerate(cy):
            c = np.array([x0, y0])
            if np.linalg.norm(c - u.k0) <= src:
                continue
            near = layer_pts[np.max(np.abs(layer_pts - c), axis=1) <= 0.5 * window] if len(layer_pts) else layer_pts
            if len(near):
                pick = near[rng.choice(len(near), size=min(n_dirs, len(near)), replace=False)]
                fams = _boundary_families(u, scene, pick, s, rng)
            else:
                fams = []
                g = kernels.interp_grad_masked(gx, gy, x0, y0, o[0], o[1], h)
                base = math.atan2(g[1], g[0]) + 0.5 * np.pi if np.all(np.isfinite(g)) else 0.0
                for ang in base + rng.uniform(-0.25 * np.pi, 0.25 * np.pi, n_dirs):
                    e = _unit(ang)
                    X = c - 0.5 * s[:, None] * e
                    Y = c + 0.5 * s[:, None] * e
                    if not _segment_free(u, X[-1], Y[-1]):
                        continue
                    q = np.full(len(s), -np.inf)
                    for k in range(len(s)):
                        q[k] = _max_normalized(u.values_at, X[k], Y[k:k + 1])[0]
                    fams.append((s, q))
            slope, r2, _, n = pooled_slope(fams)
            if n and r2 >= thresholds.r2_min:
                alpha[a, b] = slope - 1.0
    return cx, cy, alpha
