"""Length minimizers recovered from a solved field, and the energy formulation of d.

Backtracing descends the field along the characteristic direction ``A^-1 grad d``
and slides along the obstacle when a step would enter it.  Independently,
:func:`minimize_energy` computes ``E(x)``, the infimum of the path energy over
paths parameterized on [0, 1]; its square root should match the distance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .eikonal import DistanceField
from .errors import DomainError, PreconditionError, TraceError
from .scene import MetricField, Scene

log = logging.getLogger(__name__)

CONTACT_CELLS = 0.05
_STATUS = {
    kernels.TRACE_OK: "ok",
    kernels.TRACE_STAGNATED: "stagnated",
    kernels.TRACE_BLOCKED: "blocked",
    kernels.TRACE_EXITED: "exited",
    kernels.TRACE_MAXSTEPS: "max_steps",
}


@dataclass(frozen=True)
class MinimizerPath:
    """Polyline from ``x`` to ``k0`` with its transit time and boundary contacts.

    ``contact_intervals`` holds inclusive index ranges of points lying on the
    obstacle boundary (within the contact collar).
    """

    points: np.ndarray
    tau: float
    contact_intervals: list = field(default_factory=list)

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def max_step(self) -> float:
        return float(np.max(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))

    def max_discrete_curvature(self) -> float:
        """Largest turning angle per unit length over interior vertices."""
        d = np.diff(self.points, axis=0)
        n = np.linalg.norm(d, axis=1)
        ok = (n[:-1] > 1e-12) & (n[1:] > 1e-12)
        if not ok.any():
            return 0.0
        a, b = d[:-1][ok], d[1:][ok]
        ang = np.arctan2(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0], np.sum(a * b, axis=1))
        return float(np.max(np.abs(ang) / (0.5 * (n[:-1][ok] + n[1:][ok]))))

    def to_json(self) -> dict:
        return {
            "start": [float(v) for v in self.start],
            "tau": float(self.tau),
            "n_points": int(len(self.points)),
            "contact_intervals": [[int(a), int(b)] for a, b in self.contact_intervals],
            "points": [[float(p[0]), float(p[1])] for p in self.points],
        }


@dataclass(frozen=True)
class EnergyResult:
    E_value: float
    path: MinimizerPath
    iterations: int
    converged: bool = True
    unit_speed_defect: float = 0.0  # max relative deviation of segment lengths from their mean


def path_length(path, metric: Optional[MetricField] = None) -> float:
    """Midpoint-rule metric length ``sum sqrt(<A(m) dx, dx>)``."""
    pts = path.points if isinstance(path, MinimizerPath) else np.asarray(path, dtype=float)
    if len(pts) < 2:
        raise PreconditionError("a path needs at least two points")
    d = np.diff(pts, axis=0)
    if metric is None or metric.is_identity:
        return float(np.sum(np.linalg.norm(d, axis=1)))
    A = metric.A(0.5 * (pts[1:] + pts[:-1]))
    return float(np.sum(np.sqrt(np.einsum("ni,nij,nj->n", d, A, d))))


def _contact_intervals(phi_vals: np.ndarray, collar: float, max_gap: int = 8) -> list:
    """Index ranges with ``phi <= collar``; gaps of at most ``max_gap`` points are bridged."""
    idx = np.flatnonzero(phi_vals <= collar)
    if idx.size == 0:
        return []
    out = [[int(idx[0]), int(idx[0])]]
    for k in idx[1:]:
        if k - out[-1][1] <= max_gap + 1:
            out[-1][1] = int(k)
        else:
            out.append([int(k), int(k)])
    return [tuple(r) for r in out]


def _direction_field(field_: DistanceField, metric: Optional[MetricField]):
    gx, gy, _ = field_.gradient_field
    if metric is None or metric.is_isotropic:
        return gx, gy
    Ainv = metric.A_inv(field_.grid.points)
    vx = Ainv[..., 0, 0] * gx + Ainv[..., 0, 1] * gy
    vy = Ainv[..., 1, 0] * gx + Ainv[..., 1, 1] * gy
    return np.ascontiguousarray(vx), np.ascontiguousarray(vy)


def _trace(field_: DistanceField, x, metric, step, max_length=math.inf):
    x = np.asarray(x, dtype=float)
    if not field_.grid.contains(x):
        raise DomainError("start point lies outside the grid")
    if kernels.interp_plain(field_.phi, x[0], x[1], *field_.grid.origin, field_.h) < -1e-12:
        raise DomainError("start point lies inside the obstacle")
    d0 = field_.value_at(x)
    if not np.isfinite(d0):
        raise DomainError("the field is unresolved at the start point")
    vx, vy = _direction_field(field_, metric)
    px, py = field_.phi_gradient
    max_steps = int(4 * max(d0, field_.h) / step) + 2000
    out = np.empty((max_steps + 2, 2))
    o = field_.grid.origin
    n, status = kernels.trace_kernel(vx, vy, field_.phi, px, py, o[0], o[1], field_.h, x[0], x[1],
                                     field_.k0[0], field_.k0[1], field_.init_radius, step, max_steps,
                                     max_length, out)
    return out[:n].copy(), _STATUS[status]


def backtrace_minimizer(field_: DistanceField, x, metric: Optional[MetricField] = None,
                        step: Optional[float] = None) -> MinimizerPath:
    """Follow ``-A^-1 grad d`` from ``x`` to the target with obstacle sliding."""
    step = 0.5 * field_.h if step is None else float(step)
    pts, status = _trace(field_, x, metric, step)
    if status == "stagnated":
        raise TraceError(f"trapped trace from {tuple(np.round(pts[0], 6))}: steps stalled (singular cell?)")
    if status != "ok" or np.linalg.norm(pts[-1] - field_.k0) > 1e-12:
        raise TraceError(f"trace from {tuple(np.round(pts[0], 6))} ended with status {status}")
    o = field_.grid.origin
    phi_vals = np.array([kernels.interp_plain(field_.phi, p[0], p[1], o[0], o[1], field_.h) for p in pts])
    contacts = _contact_intervals(phi_vals, CONTACT_CELLS * field_.h) if np.isfinite(phi_vals).all() else []
    return MinimizerPath(pts, path_length(pts, metric), contacts)


def initial_velocity(path: MinimizerPath, length: float) -> np.ndarray:
    """Unit chord from the start to the first point at distance ``length`` along the path."""
    d = np.linalg.norm(path.points - path.start, axis=1)
    k = int(np.argmax(d >= length)) if np.any(d >= length) else len(d) - 1
    v = path.points[k] - path.start
    return v / np.linalg.norm(v)


# -- energy ------------------------------------------------------------------


def _energy(pts: np.ndarray, metric: MetricField) -> float:
    n = len(pts) - 1
    d = np.diff(pts, axis=0)
    if metric.is_identity:
        return float(n * np.sum(d * d))
    A = metric.A(0.5 * (pts[1:] + pts[:-1]))
    return float(n * np.sum(np.einsum("ni,nij,nj->n", d, A, d)))


def _energy_grad(pts: np.ndarray, metric: MetricField) -> np.ndarray:
    n = len(pts) - 1
    d = np.diff(pts, axis=0)
    mid = 0.5 * (pts[1:] + pts[:-1])
    g = np.zeros_like(pts)
    if metric.is_identity:
        Ad = d
    else:
        A = metric.A(mid)
        Ad = np.einsum("nij,nj->ni", A, d)
        # derivative of A at the midpoints, split evenly between both knots
        eps = 1e-6
        for k in range(2):
            e = np.zeros(2)
            e[k] = eps
            dA = (metric.A(mid + e) - metric.A(mid - e)) / (2 * eps)
            q = np.einsum("ni,nij,nj->n", d, dA, d)
            g[:-1, k] += 0.5 * n * q
            g[1:, k] += 0.5 * n * q
    g[1:] += 2 * n * Ad
    g[:-1] -= 2 * n * Ad
    g[0] = 0.0
    g[-1] = 0.0
    return g


def _project_out(pts: np.ndarray, scene: Scene) -> np.ndarray:
    if scene.obstacle is None:
        return pts
    inside = np.flatnonzero(scene.obstacle.phi(pts[1:-1]) < 0) + 1
    for k in inside:
        pts[k] = scene.obstacle.project(pts[k])
    return pts


def _descend(pts, scene, metric, lam_max, max_iters, rtol, window):
    n = len(pts) - 1
    step = 1.0 / (8.0 * n * lam_max)
    E = _energy(pts, metric)
    history = [E]
    it = 0
    converged = False
    while it < max_iters:
        it += 1
        g = _energy_grad(pts, metric)
        while True:
            trial = _project_out(pts - step * g, scene)
            Et = _energy(trial, metric)
            if Et <= E or step < 1e-14:
                break
            step *= 0.5
        if Et > E:
            converged = True  # no descent direction left at this resolution
            break
        pts, E = trial, Et
        history.append(E)
        if len(history) > window:
            old = history[-window - 1]
            if abs(old - E) <= rtol * max(E, 1e-300):
                converged = True
                break
    return pts, E, it, converged


def minimize_energy(scene: Scene, x, n_knots: int = 128, max_iters: int = 20000, rtol: float = 1e-6,
                    window: int = 50) -> EnergyResult:
    """Projected gradient descent on ``E = N sum <A(m) dx, dx>`` over ``n_knots`` segments.

    The path starts as the straight segment bent slightly sideways (to pick a
    side around obstacles on the symmetry axis) and is refined coarse to fine.
    """
    if n_knots < 16:
        raise PreconditionError("n_knots must be at least 16")
    x = np.asarray(x, dtype=float)
    k0 = scene.k0
    if scene.obstacle is not None and float(scene.obstacle.phi(x)) < 0:
        raise DomainError("x lies inside the obstacle")
    lam_max = float(np.max(np.linalg.eigvalsh(scene.metric.A(np.array([x, k0, 0.5 * (x + k0)])))))
    chord = k0 - x
    L = float(np.linalg.norm(chord))
    if L < 1e-14:
        pts = np.array([x, k0])
        return EnergyResult(0.0, MinimizerPath(pts, 0.0, []), 0)
    perp = np.array([-chord[1], chord[0]]) / L
    n = 16
    s = np.linspace(0.0, 1.0, n + 1)
    pts = x + s[:, None] * chord + (0.05 * L * np.sin(np.pi * s))[:, None] * perp
    pts = _project_out(pts, scene)
    total = 0
    converged = False
    while True:
        pts, E, it, converged = _descend(pts, scene, scene.metric, lam_max, max_iters - total, rtol, window)
        total += it
        if n >= n_knots or total >= max_iters:
            break
        # double the knots by midpoint insertion
        mid = 0.5 * (pts[1:] + pts[:-1])
        new = np.empty((2 * n + 1, 2))
        new[0::2] = pts
        new[1::2] = mid
        pts = _project_out(new, scene)
        n *= 2
    if not converged or n < n_knots:
        log.warning("energy descent stopped after %d iterations without converging", total)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    defect = float(np.max(np.abs(seg - seg.mean())) / seg.mean()) if seg.mean() > 0 else 0.0
    contacts = []
    if scene.obstacle is not None:
        contacts = _contact_intervals(np.abs(scene.obstacle.phi(pts)), 1e-9)
    path = MinimizerPath(pts, path_length(pts, scene.metric), contacts)
    return EnergyResult(float(E), path, total, bool(converged and n >= n_knots), defect)


@dataclass(frozen=True)
class EnergyCheckRow:
    x: tuple
    E: Optional[float]
    d: Optional[float]
    rel_gap: Optional[float]
    skipped: Optional[str] = None


def energy_distance_check(scene: Scene, samples: Sequence, field_: Optional[DistanceField] = None,
                          distance=None, n_knots: int = 128, exclusion: Optional[float] = None) -> list:
    """Compare ``sqrt(E)`` with the distance at each sample.

    The distance comes from ``field_`` (interpolated) or from a callable
    ``distance``.  Samples within ``exclusion`` of the target are skipped with
    reason ``near_target``.
    """
    if field_ is None and distance is None:
        raise PreconditionError("need a field or a distance function")
    if exclusion is None:
        exclusion = field_.init_radius if field_ is not None else 0.05
    rows = []
    for p in samples:
        p = np.asarray(p, dtype=float)
        key = (float(p[0]), float(p[1]))
        if np.linalg.norm(p - scene.k0) <= exclusion:
            rows.append(EnergyCheckRow(key, None, None, None, "near_target"))
            continue
        d = float(distance(p)) if distance is not None else field_.value_at(p)
        if not np.isfinite(d):
            rows.append(EnergyCheckRow(key, None, None, None, "unresolved"))
            continue
        res = minimize_energy(scene, p, n_knots=n_knots)
        rows.append(EnergyCheckRow(key, res.E_value, d, abs(math.sqrt(res.E_value) - d) / d))
    return rows


def max_relative_gap(rows: list) -> float:
    gaps = [r.rel_gap for r in rows if r.rel_gap is not None]
    return max(gaps) if gaps else math.nan
