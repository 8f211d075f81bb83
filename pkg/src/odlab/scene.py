"""Obstacles, metrics and scenes, plus the planar geometry queries built on them.

Obstacles are stored implicitly through a level-set function ``phi`` that is
negative inside, zero on the boundary and positive outside.  Disks, ellipses and
the two-disk crescent have closed-form fast paths; anything else goes through
:class:`ImplicitObstacle`, which only needs ``phi`` (and optionally its
gradient).
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import (
    ConvergenceError,
    DomainError,
    GeometryError,
    SceneError,
    UnsupportedError,
)

log = logging.getLogger(__name__)

GRAD_EPS = 1e-10
PROJ_TOL_ANALYTIC = 1e-9
PROJ_TOL_CUSTOM = 1e-6
MAX_PROJ_ITERS = 100
SEG_SAMPLES = 256


def _as_points(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


def _norm(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(v * v, axis=-1))


# --------------------------------------------------------------------------
# obstacles
# --------------------------------------------------------------------------


class Obstacle:
    """Compact obstacle given by a level-set function.

    Subclasses implement ``phi``; everything else has a generic fallback.
    """

    kind = "custom"
    proj_tol = PROJ_TOL_CUSTOM

    def phi(self, x) -> np.ndarray:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        x = _as_points(x)
        eps = 1e-6
        g = np.empty(x.shape)
        for k in range(x.shape[-1]):
            e = np.zeros(x.shape[-1])
            e[k] = eps
            g[..., k] = (self.phi(x + e) - self.phi(x - e)) / (2 * eps)
        return g

    # -- generic queries ---------------------------------------------------

    @property
    def corners(self) -> np.ndarray:
        """Points where the boundary is only piecewise smooth."""
        return np.empty((0, 2))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def project(self, x) -> np.ndarray:
        """Newton iteration along the level-set gradient onto ``phi = 0``."""
        p = _as_points(x).copy()
        for _ in range(MAX_PROJ_ITERS):
            val = float(self.phi(p))
            g = self.grad(p)
            gg = float(g @ g)
            if gg < GRAD_EPS**2:
                raise GeometryError("degenerate level set: |grad phi| vanishes")
            p = p - val * g / gg
            if abs(float(self.phi(p))) <= self.proj_tol:
                return p
        raise ConvergenceError(f"boundary projection did not converge in {MAX_PROJ_ITERS} iterations")

    def signed_distance(self, x) -> float:
        x = _as_points(x)
        p = self.project(x)
        dist = float(np.linalg.norm(x - p))
        return -dist if float(self.phi(x)) < 0 else dist

    def normal(self, x) -> np.ndarray:
        p = self.project(x)
        g = self.grad(p)
        n = float(np.linalg.norm(g))
        if n < GRAD_EPS:
            raise GeometryError("degenerate level set: |grad phi| vanishes")
        return g / n

    def curvature(self, x) -> float:
        """Signed curvature of the zero level set, positive where the obstacle is convex."""
        return implicit_curvature(self.phi, _as_points(x))

    def boundary_samples(self, n: int) -> np.ndarray:
        """Roughly ``n`` points on the zero level set, traced from a fine contour."""
        import contourpy

        lo, hi = self.bounds()
        pad = 0.05 * float(np.max(hi - lo))
        m = 400
        xs = np.linspace(lo[0] - pad, hi[0] + pad, m)
        ys = np.linspace(lo[1] - pad, hi[1] + pad, m)
        X, Y = np.meshgrid(xs, ys)
        Z = self.phi(np.stack([X, Y], axis=-1))
        lines = contourpy.contour_generator(X, Y, Z).lines(0.0)
        pts = np.concatenate(lines, axis=0)
        idx = np.linspace(0, len(pts) - 1, n).round().astype(int)
        return np.array([self.project(p) for p in pts[idx]])

    def to_dict(self) -> dict:
        raise SceneError("custom obstacles cannot be serialized")


def implicit_curvature(phi: Callable, x: np.ndarray, eps: float = 1e-4) -> float:
    """Curvature of the level set of ``phi`` through ``x`` by central differences."""
    ex = np.array([eps, 0.0])
    ey = np.array([0.0, eps])
    f0 = float(phi(x))
    fx = (float(phi(x + ex)) - float(phi(x - ex))) / (2 * eps)
    fy = (float(phi(x + ey)) - float(phi(x - ey))) / (2 * eps)
    fxx = (float(phi(x + ex)) - 2 * f0 + float(phi(x - ex))) / eps**2
    fyy = (float(phi(x + ey)) - 2 * f0 + float(phi(x - ey))) / eps**2
    fxy = (
        float(phi(x + ex + ey)) - float(phi(x + ex - ey)) - float(phi(x - ex + ey)) + float(phi(x - ex - ey))
    ) / (4 * eps**2)
    g2 = fx * fx + fy * fy
    if g2 < GRAD_EPS:
        raise GeometryError("degenerate level set: |grad phi| vanishes")
    return (fxx * fy * fy - 2 * fx * fy * fxy + fyy * fx * fx) / g2**1.5


class Disk(Obstacle):
    kind = "disk"
    proj_tol = PROJ_TOL_ANALYTIC

    def __init__(self, center: Sequence[float], radius: float):
        if radius <= 0:
            raise SceneError("disk radius must be positive")
        self.center = _as_points(center)
        self.radius = float(radius)

    def phi(self, x):
        return _norm(_as_points(x) - self.center) - self.radius

    def grad(self, x):
        v = _as_points(x) - self.center
        r = _norm(v)[..., None]
        with np.errstate(invalid="ignore", divide="ignore"):
            return v / r

    def bounds(self):
        return self.center - self.radius, self.center + self.radius

    def project(self, x):
        v = _as_points(x) - self.center
        r = float(np.linalg.norm(v))
        if r < GRAD_EPS:
            raise GeometryError("projection from the disk center is not unique")
        return self.center + self.radius * v / r

    def signed_distance(self, x):
        return float(self.phi(x))

    def normal(self, x):
        v = _as_points(x) - self.center
        r = float(np.linalg.norm(v))
        if r < GRAD_EPS:
            raise GeometryError("normal undefined at the disk center")
        return v / r

    def curvature(self, x):
        return 1.0 / self.radius

    def boundary_samples(self, n):
        t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        return self.center + self.radius * np.stack([np.cos(t), np.sin(t)], axis=-1)

    def to_dict(self):
        return {"kind": "disk", "center": self.center.tolist(), "radius": self.radius}


class Ellipse(Obstacle):
    """Axis-aligned ellipse ``((x-cx)/a)^2 + ((y-cy)/b)^2 <= 1``."""

    kind = "ellipse"
    proj_tol = PROJ_TOL_ANALYTIC

    def __init__(self, center: Sequence[float], semi_axes: Sequence[float]):
        a, b = (float(s) for s in semi_axes)
        if a <= 0 or b <= 0:
            raise SceneError("ellipse semi-axes must be positive")
        self.center = _as_points(center)
        self.a, self.b = a, b

    def phi(self, x):
        v = _as_points(x) - self.center
        return (v[..., 0] / self.a) ** 2 + (v[..., 1] / self.b) ** 2 - 1.0

    def grad(self, x):
        v = _as_points(x) - self.center
        return np.stack([2 * v[..., 0] / self.a**2, 2 * v[..., 1] / self.b**2], axis=-1)

    def bounds(self):
        ab = np.array([self.a, self.b])
        return self.center - ab, self.center + ab

    def _param(self, t):
        return self.center + np.stack([self.a * np.cos(t), self.b * np.sin(t)], axis=-1)

    def project(self, x):
        q = _as_points(x) - self.center
        a, b = self.a, self.b
        ts = np.linspace(-np.pi, np.pi, 129)
        d2 = (a * np.cos(ts) - q[0]) ** 2 + (b * np.sin(ts) - q[1]) ** 2
        t = float(ts[np.argmin(d2)])
        for _ in range(MAX_PROJ_ITERS):
            # derivative of half the squared distance and its derivative
            f = (b * b - a * a) * np.cos(t) * np.sin(t) + a * q[0] * np.sin(t) - b * q[1] * np.cos(t)
            fp = (b * b - a * a) * np.cos(2 * t) + a * q[0] * np.cos(t) + b * q[1] * np.sin(t)
            if abs(fp) < 1e-14:
                break
            step = f / fp
            t -= float(np.clip(step, -0.5, 0.5))
            if abs(step) < 1e-15:
                break
        else:
            raise ConvergenceError("ellipse projection did not converge")
        return self._param(t)

    def curvature(self, x):
        v = _as_points(x) - self.center
        t = np.arctan2(v[1] / self.b, v[0] / self.a)
        a, b = self.a, self.b
        return a * b / (b * b * np.cos(t) ** 2 + a * a * np.sin(t) ** 2) ** 1.5

    def boundary_samples(self, n):
        t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        return self._param(t)

    def to_dict(self):
        return {"kind": "ellipse", "center": self.center.tolist(), "semi_axes": [self.a, self.b]}


class Crescent(Obstacle):
    """Outer disk minus an (open) inner disk: ``phi = max(phi_outer, -phi_inner)``.

    The boundary is two circular arcs meeting at two corner points.
    """

    kind = "crescent"
    proj_tol = PROJ_TOL_ANALYTIC

    def __init__(self, outer_center, outer_radius, inner_center, inner_radius):
        self.c1 = _as_points(outer_center)
        self.r1 = float(outer_radius)
        self.c2 = _as_points(inner_center)
        self.r2 = float(inner_radius)
        dist = float(np.linalg.norm(self.c2 - self.c1))
        if not (abs(self.r1 - self.r2) < dist < self.r1 + self.r2):
            raise SceneError("crescent circles must intersect in two points")
        # circle-circle intersection
        u = (self.c2 - self.c1) / dist
        along = (dist**2 + self.r1**2 - self.r2**2) / (2 * dist)
        off = np.sqrt(self.r1**2 - along**2)
        base = self.c1 + along * u
        perp = np.array([-u[1], u[0]])
        self._corners = np.array([base + off * perp, base - off * perp])

    @property
    def corners(self):
        return self._corners

    def phi(self, x):
        x = _as_points(x)
        return np.maximum(_norm(x - self.c1) - self.r1, self.r2 - _norm(x - self.c2))

    def bounds(self):
        return self.c1 - self.r1, self.c1 + self.r1

    def _arc_candidates(self, x):
        """Closest point on each arc (radial projection or nearest corner)."""
        cands = []
        for c, r, on_arc in (
            (self.c1, self.r1, lambda p: np.linalg.norm(p - self.c2) >= self.r2 - 1e-12),
            (self.c2, self.r2, lambda p: np.linalg.norm(p - self.c1) <= self.r1 + 1e-12),
        ):
            v = x - c
            n = np.linalg.norm(v)
            if n > GRAD_EPS:
                p = c + r * v / n
                if on_arc(p):
                    cands.append(p)
        cands.extend(self._corners)
        return np.array(cands)

    def project(self, x):
        x = _as_points(x)
        cands = self._arc_candidates(x)
        return cands[np.argmin(_norm(cands - x))]

    def signed_distance(self, x):
        x = _as_points(x)
        dist = float(np.linalg.norm(self.project(x) - x))
        return -dist if float(self.phi(x)) < 0 else dist

    def _which_arc(self, p):
        if np.min(_norm(self._corners - p)) < 1e-7:
            raise GeometryError("boundary corner: normal and curvature are undefined there")
        d_outer = abs(np.linalg.norm(p - self.c1) - self.r1)
        d_inner = abs(np.linalg.norm(p - self.c2) - self.r2)
        return "outer" if d_outer <= d_inner else "inner"

    def grad(self, x):
        x = _as_points(x)
        v1 = x - self.c1
        v2 = x - self.c2
        n1 = _norm(v1)[..., None]
        n2 = _norm(v2)[..., None]
        outer_active = (_norm(v1) - self.r1 >= self.r2 - _norm(v2))[..., None]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(outer_active, v1 / n1, -v2 / n2)

    def normal(self, x):
        p = self.project(x)
        if self._which_arc(p) == "outer":
            v = p - self.c1
        else:
            v = self.c2 - p
        return v / np.linalg.norm(v)

    def curvature(self, x):
        p = _as_points(x)
        return 1.0 / self.r1 if self._which_arc(p) == "outer" else -1.0 / self.r2

    def boundary_samples(self, n):
        a1 = np.arctan2(*(self._corners - self.c1)[:, ::-1].T)
        a2 = np.arctan2(*(self._corners - self.c2)[:, ::-1].T)
        # outer arc runs the long way round, away from the inner disk
        mid_dir = self.c1 - self.c2
        mid_dir = mid_dir / np.linalg.norm(mid_dir)
        n_out = max(3, int(round(n * self.r1 / (self.r1 + self.r2))))
        n_in = max(3, n - n_out)
        out_pts = _arc_points(self.c1, self.r1, a1[0], a1[1], self.c1 + self.r1 * mid_dir, n_out)
        in_pts = _arc_points(self.c2, self.r2, a2[1], a2[0], self.c2 + self.r2 * mid_dir, n_in)
        return np.concatenate([out_pts, in_pts[1:-1]])

    def to_dict(self):
        return {
            "kind": "crescent",
            "outer": {"center": self.c1.tolist(), "radius": self.r1},
            "inner": {"center": self.c2.tolist(), "radius": self.r2},
        }


def _arc_points(c, r, a0, a1, through, n):
    """``n`` points on the arc of circle (c, r) from angle a0 to a1 passing near ``through``."""
    ta = np.arctan2(through[1] - c[1], through[0] - c[0])
    span = (a1 - a0) % (2 * np.pi)
    if not (((ta - a0) % (2 * np.pi)) <= span):
        span = span - 2 * np.pi
    t = a0 + np.linspace(0.0, 1.0, n) * span
    return c + r * np.stack([np.cos(t), np.sin(t)], axis=-1)


class ImplicitObstacle(Obstacle):
    """User-supplied level-set obstacle; ``bounds`` must enclose the zero set."""

    kind = "custom"

    def __init__(self, phi_fn: Callable, bounds: tuple, grad_fn: Optional[Callable] = None):
        self._phi = phi_fn
        self._grad = grad_fn
        lo, hi = bounds
        self._bounds = (_as_points(lo), _as_points(hi))

    def phi(self, x):
        return np.asarray(self._phi(_as_points(x)), dtype=float)

    def grad(self, x):
        if self._grad is not None:
            return np.asarray(self._grad(_as_points(x)), dtype=float)
        return super().grad(x)

    def bounds(self):
        return self._bounds


def obstacle_from_dict(spec: Optional[dict]) -> Optional[Obstacle]:
    if spec is None or spec.get("kind") in (None, "none"):
        return None
    kind = spec["kind"]
    try:
        if kind == "disk":
            return Disk(spec["center"], spec["radius"])
        if kind == "ellipse":
            return Ellipse(spec["center"], spec["semi_axes"])
        if kind == "crescent":
            return Crescent(
                spec["outer"]["center"], spec["outer"]["radius"], spec["inner"]["center"], spec["inner"]["radius"]
            )
    except KeyError as exc:
        raise SceneError(f"obstacle {kind!r} is missing field {exc}") from None
    raise SceneError(f"unknown obstacle kind {kind!r}")


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricField:
    """Riemannian metric ``x -> A(x)``; curve length is the integral of sqrt(<A g', g'>).

    ``kind`` is ``identity``, ``isotropic`` (``A = a(x) I``) or ``general``.
    ``A_fn`` maps an array of points ``(..., 2)`` to matrices ``(..., 2, 2)``.
    """

    A_fn: Callable
    kind: str = "general"
    a_fn: Optional[Callable] = None
    spec: Optional[dict] = None

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    @property
    def is_isotropic(self) -> bool:
        return self.kind in ("identity", "isotropic")

    def A(self, x) -> np.ndarray:
        return np.asarray(self.A_fn(_as_points(x)), dtype=float)

    def A_inv(self, x) -> np.ndarray:
        return np.linalg.inv(self.A(x))

    def a(self, x) -> np.ndarray:
        """Isotropic factor ``a(x)``; only for identity/isotropic metrics."""
        x = _as_points(x)
        if self.kind == "identity":
            return np.ones(x.shape[:-1])
        if self.a_fn is None:
            raise UnsupportedError("metric is not isotropic")
        return np.asarray(self.a_fn(x), dtype=float)

    def anisotropy(self, x) -> np.ndarray:
        """Speed anisotropy ``sqrt(lambda_max / lambda_min)`` at each point."""
        ev = np.linalg.eigvalsh(self.A(x))
        if np.any(ev[..., 0] <= 0):
            raise SceneError("metric is not positive definite")
        return np.sqrt(ev[..., -1] / ev[..., 0])

    @classmethod
    def identity(cls) -> "MetricField":
        def A_fn(x):
            return np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)).copy()

        return cls(A_fn, "identity", spec={"kind": "identity"})

    @classmethod
    def constant(cls, A, inverse: bool = False) -> "MetricField":
        M = np.array(A, dtype=float)
        if inverse:
            M = np.linalg.inv(M)
        if not np.allclose(M, M.T) or np.any(np.linalg.eigvalsh(M) <= 0):
            raise SceneError("metric matrix must be symmetric positive definite")

        def A_fn(x):
            return np.broadcast_to(M, x.shape[:-1] + (2, 2)).copy()

        return cls(A_fn, "general", spec={"kind": "constant", "A": M.tolist()})

    @classmethod
    def isotropic(cls, a0: float = 1.0, bumps: Sequence[dict] = ()) -> "MetricField":
        """``a(x) = a0 + sum_k amp_k exp(-|x - c_k|^2 / (2 w_k^2))``."""
        bumps = [dict(b) for b in bumps]

        def a_fn(x):
            val = np.full(x.shape[:-1], float(a0))
            for b in bumps:
                r2 = np.sum((x - np.asarray(b["center"], float)) ** 2, axis=-1)
                val = val + float(b["amplitude"]) * np.exp(-r2 / (2 * float(b["width"]) ** 2))
            return val

        def A_fn(x):
            return a_fn(x)[..., None, None] * np.eye(2)

        spec = {"kind": "isotropic", "a": float(a0), "bumps": bumps}
        return cls(A_fn, "isotropic", a_fn=a_fn, spec=spec)

    @classmethod
    def from_fn(cls, A_fn: Callable) -> "MetricField":
        return cls(A_fn, "general")

    def to_dict(self) -> dict:
        if self.spec is None:
            raise SceneError("custom metrics cannot be serialized")
        return self.spec


def metric_from_dict(spec: Optional[dict]) -> MetricField:
    if spec is None:
        return MetricField.identity()
    kind = spec.get("kind", "identity")
    if kind == "identity":
        return MetricField.identity()
    if kind == "isotropic":
        return MetricField.isotropic(spec.get("a", 1.0), spec.get("bumps", ()))
    if kind == "constant":
        if "A_inv" in spec:
            return MetricField.constant(spec["A_inv"], inverse=True)
        return MetricField.constant(spec["A"], inverse=bool(spec.get("inverse", False)))
    raise SceneError(f"unknown metric kind {kind!r}")


# --------------------------------------------------------------------------
# scene
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Scene:
    obstacle: Optional[Obstacle]
    k0: np.ndarray
    metric: MetricField = field(default_factory=MetricField.identity)
    bbox: np.ndarray = field(default_factory=lambda: np.array([[-3.0, -3.0], [3.0, 3.0]]))

    def __post_init__(self):
        object.__setattr__(self, "k0", _as_points(self.k0))
        object.__setattr__(self, "bbox", _as_points(self.bbox))
        lo, hi = self.bbox
        if np.any(hi <= lo):
            raise SceneError("bbox must have positive extent")
        if not self.in_bbox(self.k0):
            raise SceneError("target k0 lies outside the bbox")
        if self.obstacle is not None:
            if float(self.obstacle.phi(self.k0)) <= 0:
                raise SceneError("target k0 must lie strictly outside the obstacle")
            olo, ohi = self.obstacle.bounds()
            if np.any(olo < lo) or np.any(ohi > hi):
                raise SceneError("bbox must contain the obstacle")
            pts = np.vstack([olo, ohi, self.k0])
            diam = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
            pad = float(min(np.min(pts.min(axis=0) - lo), np.min(hi - pts.max(axis=0))))
            if pad < 0.5 * diam:
                log.warning("bbox padding %.3g is below half the scene diameter %.3g", pad, diam)

    @property
    def has_obstacle(self) -> bool:
        return self.obstacle is not None

    def phi(self, x) -> np.ndarray:
        x = _as_points(x)
        if self.obstacle is None:
            return np.full(x.shape[:-1], np.inf)
        return self.obstacle.phi(x)

    def in_bbox(self, x, tol: float = 1e-12) -> bool:
        x = _as_points(x)
        lo, hi = self.bbox
        return bool(np.all(x >= lo - tol) and np.all(x <= hi + tol))

    def diameter(self) -> float:
        return float(np.linalg.norm(self.bbox[1] - self.bbox[0]))

    def to_dict(self) -> dict:
        return {
            "obstacle": None if self.obstacle is None else self.obstacle.to_dict(),
            "k0": self.k0.tolist(),
            "metric": self.metric.to_dict(),
            "bbox": self.bbox.tolist(),
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "Scene":
        try:
            return cls(
                obstacle=obstacle_from_dict(spec.get("obstacle")),
                k0=spec["k0"],
                metric=metric_from_dict(spec.get("metric")),
                bbox=spec["bbox"],
            )
        except KeyError as exc:
            raise SceneError(f"scene is missing field {exc}") from None


def load_scene(path) -> Scene:
    with open(path) as fh:
        text = fh.read()
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return Scene.from_dict(spec)


def disk_scene(center=(0.0, 0.0), radius=1.0, k0=(2.0, 0.0), bbox=((-3.0, -3.0), (3.0, 3.0))) -> Scene:
    return Scene(Disk(center, radius), k0, MetricField.identity(), bbox)


def crescent_scene(k0=(-2.0, 0.0), bbox=((-3.0, -3.0), (3.0, 3.0))) -> Scene:
    """Disk((0,0),1) minus disk((0.8,0),0.9); the concavity opens towards +x."""
    return Scene(Crescent((0.0, 0.0), 1.0, (0.8, 0.0), 0.9), k0, MetricField.identity(), bbox)


def free_scene(k0=(0.0, 0.0), bbox=((-1.0, -1.0), (1.0, 1.0)), metric: Optional[MetricField] = None) -> Scene:
    return Scene(None, k0, metric or MetricField.identity(), bbox)


# --------------------------------------------------------------------------
# queries
# --------------------------------------------------------------------------


def _require_obstacle(scene: Scene) -> Obstacle:
    if scene.obstacle is None:
        raise GeometryError("scene has no obstacle")
    return scene.obstacle


def signed_distance(scene: Scene, x) -> float:
    """Signed Euclidean distance to the obstacle boundary, negative inside."""
    if not scene.in_bbox(x):
        raise DomainError(f"point {list(np.asarray(x))} lies outside the bbox")
    if scene.obstacle is None:
        return float("inf")
    return float(scene.obstacle.signed_distance(_as_points(x)))


def project_boundary(scene: Scene, x) -> np.ndarray:
    if not scene.in_bbox(x):
        raise DomainError(f"point {list(np.asarray(x))} lies outside the bbox")
    return _require_obstacle(scene).project(_as_points(x))


def outward_normal(scene: Scene, x) -> np.ndarray:
    return _require_obstacle(scene).normal(_as_points(x))


def boundary_curvature(scene: Scene, x) -> float:
    x = _as_points(x)
    if x.shape != (2,):
        raise UnsupportedError("boundary curvature is only defined for planar scenes")
    obs = _require_obstacle(scene)
    if abs(float(obs.phi(x))) > max(obs.proj_tol, 1e-6) * 10:
        raise DomainError("curvature queries need a point on the boundary")
    return float(obs.curvature(x))


# -- convex hull ---------------------------------------------------------------


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def monotone_chain(points) -> np.ndarray:
    """Counterclockwise convex hull vertices (Andrew's monotone chain)."""
    pts = sorted(map(tuple, np.asarray(points, dtype=float)))
    pts = list(dict.fromkeys(pts))
    if len(pts) < 3:
        raise GeometryError("convex hull needs at least 3 distinct points")
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise GeometryError("convex hull input is collinear")
    return np.array(hull)


@dataclass(frozen=True)
class ConvexHull2D:
    vertices: np.ndarray

    @property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices, np.roll(self.vertices, -1, axis=0)

    def support(self, direction) -> np.ndarray:
        return self.vertices[int(np.argmax(self.vertices @ np.asarray(direction, float)))]

    def area(self) -> float:
        x, y = self.vertices.T
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def perimeter(self) -> float:
        a, b = self.edges
        return float(np.sum(_norm(b - a)))

    def _edge_distances(self, x) -> np.ndarray:
        a, b = self.edges
        ab = b - a
        t = np.clip(np.sum((x - a) * ab, axis=-1) / np.sum(ab * ab, axis=-1), 0.0, 1.0)
        return _norm(a + t[:, None] * ab - x)

    def contains(self, x, tol: float = 0.0) -> bool:
        x = _as_points(x)
        a, b = self.edges
        cr = (b[:, 0] - a[:, 0]) * (x[1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (x[0] - a[:, 0])
        if np.all(cr >= 0):
            return True
        return bool(np.min(self._edge_distances(x)) <= tol)

    def distance(self, x) -> float:
        """Euclidean distance from ``x`` to the hull (zero inside)."""
        x = _as_points(x)
        if self.contains(x):
            return 0.0
        return float(np.min(self._edge_distances(x)))

    def boundary_points(self, spacing: float) -> np.ndarray:
        a, b = self.edges
        out = []
        for p, q in zip(a, b):
            n = max(1, int(np.ceil(np.linalg.norm(q - p) / spacing)))
            t = np.arange(n) / n
            out.append(p + t[:, None] * (q - p))
        return np.concatenate(out)


def convex_hull_2d(scene: Scene, n_samples: int = 720) -> ConvexHull2D:
    if n_samples < 16:
        raise DomainError("convex hull needs at least 16 boundary samples")
    obs = _require_obstacle(scene)
    pts = obs.boundary_samples(n_samples)
    if len(obs.corners):
        pts = np.vstack([pts, obs.corners])
    return ConvexHull2D(monotone_chain(pts))


# -- I(k0) / S(k0) classification ------------------------------------------


class Region(str, enum.Enum):
    I = "I_region"
    S = "S_region"


def classify_region(scene: Scene, x, seg_samples: int = SEG_SAMPLES) -> Region:
    """``I`` when the segment [x, k0] avoids the open obstacle, ``S`` otherwise."""
    if not scene.metric.is_identity:
        raise UnsupportedError("region classification needs the identity metric")
    x = _as_points(x)
    if scene.obstacle is None:
        return Region.I
    if float(scene.obstacle.phi(x)) < 0:
        raise DomainError("point lies inside the obstacle")
    seg = lambda t: x + np.multiply.outer(t, scene.k0 - x)  # noqa: E731
    t = np.linspace(0.0, 1.0, seg_samples)
    vals = scene.obstacle.phi(seg(t))
    if np.any(vals < 0):
        return Region.S
    # refinement pass around the closest sample
    i = int(np.argmin(vals))
    lo, hi = t[max(i - 1, 0)], t[min(i + 1, seg_samples - 1)]
    res = minimize_scalar(lambda s: float(scene.obstacle.phi(seg(s))), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return Region.S if res.fun < -1e-12 else Region.I
