"""Grid solvers for the obstacle-constrained distance function.

``solve_isotropic_fmm`` handles ``A = a(x) I`` with first-order fast marching;
``solve_anisotropic_graph`` handles general SPD metrics with Dijkstra on a
grid graph with a wide neighbour stencil.
"""

from __future__ import annotations

import csv
import logging
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from . import kernels
from .errors import DomainError, SolverError
from .scene import Scene

log = logging.getLogger(__name__)

INIT_RADIUS_CELLS = 4.0
MAX_ANISOTROPY = 10.0
BAND_CELLS = 2.0
REACH_CELLS = 12
FIELD_MAGIC = b"ODLF"
FIELD_VERSION = 1
_HEADER = struct.Struct("<4sIIIddd")  # magic, version, nx, ny, h, ox, oy


@dataclass(frozen=True)
class Grid:
    origin: np.ndarray
    h: float
    dims: tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))
        if self.h <= 0:
            raise SolverError("grid spacing must be positive")
        if min(self.dims) < 8:
            raise SolverError("grid needs at least 8 nodes per axis")

    @classmethod
    def covering(cls, bbox, h: float) -> "Grid":
        bbox = np.asarray(bbox, dtype=float)
        n = np.floor((bbox[1] - bbox[0]) / h + 1e-9).astype(int) + 1
        return cls(bbox[0], float(h), (int(n[0]), int(n[1])))

    @cached_property
    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return (self.origin[0] + self.h * np.arange(self.dims[0]),
                self.origin[1] + self.h * np.arange(self.dims[1]))

    @cached_property
    def points(self) -> np.ndarray:
        xs, ys = self.axes
        return np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.h * (np.array(self.dims) - 1)

    def index_of(self, x) -> tuple[int, int]:
        """Nearest node index."""
        f = np.rint((np.asarray(x, float) - self.origin) / self.h).astype(int)
        f = np.clip(f, 0, np.array(self.dims) - 1)
        return int(f[0]), int(f[1])

    def point(self, i: int, j: int) -> np.ndarray:
        return self.origin + self.h * np.array([i, j], dtype=float)

    def contains(self, x) -> bool:
        x = np.asarray(x, float)
        return bool(np.all(x >= self.origin - 1e-12) and np.all(x <= self.upper + 1e-12))


@dataclass(frozen=True)
class DistanceField:
    """Solved field on a grid.

    ``values`` is ``inf`` on obstacle nodes and on unreachable free nodes.
    ``free`` marks non-obstacle nodes, ``source`` the initialization ball.
    """

    grid: Grid
    values: np.ndarray
    free: np.ndarray
    source: np.ndarray
    phi: np.ndarray
    k0: np.ndarray
    metric_kind: str = "identity"
    meta: dict = field(default_factory=dict)

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def init_radius(self) -> float:
        return float(self.meta.get("init_radius", INIT_RADIUS_CELLS * self.h))

    @property
    def n_unreachable(self) -> int:
        return int(np.count_nonzero(self.free & ~np.isfinite(self.values)))

    @cached_property
    def status(self) -> np.ndarray:
        """Per-node status: ``accepted`` (finite value) or ``far``."""
        return np.where(np.isfinite(self.values), "accepted", "far")

    @cached_property
    def _gradient(self):
        gx = np.empty_like(self.values)
        gy = np.empty_like(self.values)
        one_sided = np.zeros(self.values.shape, dtype=bool)
        kernels.upwind_gradient_kernel(self.values, self.free, self.h, gx, gy, one_sided)
        return gx, gy, one_sided

    @property
    def gradient_field(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Upwind gradient components and the one-sided stencil flag, per node."""
        return self._gradient

    @cached_property
    def phi_gradient(self) -> tuple[np.ndarray, np.ndarray]:
        gx, gy = np.gradient(self.phi, self.h)
        return np.ascontiguousarray(gx), np.ascontiguousarray(gy)

    def value_at(self, x) -> float:
        """Bilinear interpolation over resolved corners; NaN if none."""
        o = self.grid.origin
        return float(kernels.interp_masked(self.values, float(x[0]), float(x[1]), o[0], o[1], self.h))

    def values_at(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return np.array([self.value_at(p) for p in pts])


# -- construction helpers -------------------------------------------------------


def _phi_grid(scene: Scene, grid: Grid) -> np.ndarray:
    if scene.obstacle is None:
        return np.full(grid.dims, 1e6)
    return np.ascontiguousarray(scene.obstacle.phi(grid.points))


def _source_init(scene: Scene, grid: Grid, free: np.ndarray, radius: float, local_norm) -> tuple:
    pts = grid.points
    dist_e = np.linalg.norm(pts - scene.k0, axis=-1)
    source = (dist_e <= radius + 1e-12) & free
    if not source.any():
        source[grid.index_of(scene.k0)] = True
    u = np.full(grid.dims, np.inf)
    u[source] = local_norm(pts[source] - scene.k0)
    return u, source


def _validate(scene: Scene, h: float):
    if scene.obstacle is not None and float(scene.obstacle.phi(scene.k0)) <= 0:
        raise SolverError("k0 lies inside the obstacle")
    if not scene.in_bbox(scene.k0):
        raise SolverError("k0 lies outside the bbox")
    if not (h > 0):
        raise SolverError("grid spacing must be positive")


def solve_isotropic_fmm(scene: Scene, h: float, init_radius_cells: float = INIT_RADIUS_CELLS,
                        band_cells: float = BAND_CELLS, reach_cells: int = REACH_CELLS) -> DistanceField:
    """Fast marching for ``|grad d| = sqrt(a(x))`` outside the obstacle."""
    _validate(scene, h)
    if not scene.metric.is_isotropic:
        raise SolverError("fast marching needs an identity or isotropic metric")
    grid = Grid.covering(scene.bbox, h)
    phi = _phi_grid(scene, grid)
    free = phi >= 0
    a = scene.metric.a(grid.points)
    if np.any(~(a > 0)):
        raise SolverError("isotropic metric factor must be positive")
    slow = np.ascontiguousarray(np.sqrt(a))
    s0 = float(np.sqrt(scene.metric.a(scene.k0)))
    radius = init_radius_cells * h
    u, source = _source_init(scene, grid, free, radius, lambda d: s0 * np.linalg.norm(d, axis=-1))
    order = np.empty(u.size)
    band = free & (phi < band_cells * h)
    n_acc, violations = kernels.fmm_kernel(u, free, slow, float(h), order, band, phi,
                                           float(grid.origin[0]), float(grid.origin[1]), int(reach_cells))
    if violations:
        raise SolverError(f"fast marching lost monotone causality ({violations} violations)")
    u[~free] = np.inf
    field_ = DistanceField(grid, u, free, source, phi, scene.k0.copy(), scene.metric.kind,
                           {"solver": "fmm", "init_radius": radius, "n_accepted": int(n_acc)})
    field_.meta["n_unreachable"] = field_.n_unreachable
    field_.meta["acceptance_order"] = order[:n_acc]
    if field_.n_unreachable:
        log.warning("%d free nodes are unreachable from k0", field_.n_unreachable)
    return field_


def stencil_offsets(order: int) -> np.ndarray:
    """Primitive lattice directions with max-norm <= order (8 for 1, 16 for 2, 32 for 3)."""
    out = []
    for di in range(-order, order + 1):
        for dj in range(-order, order + 1):
            if (di, dj) != (0, 0) and math.gcd(abs(di), abs(dj)) == 1:
                out.append((di, dj))
    return np.array(out, dtype=np.int64)


def _edge_checks(offsets: np.ndarray):
    """Nodes an edge passes next to; the edge is dropped if any is an obstacle node."""
    checks = []
    for di, dj in offsets:
        m = max(abs(di), abs(dj))
        nodes = set()
        for k in range(1, 2 * m):
            t = k / (2 * m)
            px, py = t * di, t * dj
            xs = {math.floor(px), math.ceil(px)} if abs(px - round(px)) == 0.5 else {round(px)}
            ys = {math.floor(py), math.ceil(py)} if abs(py - round(py)) == 0.5 else {round(py)}
            nodes.update((a, b) for a in xs for b in ys)
        nodes -= {(0, 0), (int(di), int(dj))}
        checks.append(sorted(nodes))
    width = max(1, max(len(c) for c in checks))
    arr = np.zeros((len(offsets), width, 2), dtype=np.int64)
    counts = np.zeros(len(offsets), dtype=np.int64)
    for e, c in enumerate(checks):
        counts[e] = len(c)
        if c:
            arr[e, : len(c)] = c
    return arr, counts


def solve_anisotropic_graph(scene: Scene, h: float, stencil: int = 2,
                            init_radius_cells: float = INIT_RADIUS_CELLS) -> DistanceField:
    """Label-setting shortest paths on the grid graph (default 16-neighbour stencil)."""
    _validate(scene, h)
    grid = Grid.covering(scene.bbox, h)
    phi = _phi_grid(scene, grid)
    free = phi >= 0
    nx, ny = grid.dims
    hx = grid.origin[0] + 0.5 * h * np.arange(2 * nx - 1)
    hy = grid.origin[1] + 0.5 * h * np.arange(2 * ny - 1)
    half_pts = np.stack(np.meshgrid(hx, hy, indexing="ij"), axis=-1)
    A = scene.metric.A(half_pts)
    ratio = float(np.max(scene.metric.anisotropy(half_pts)))
    if ratio > MAX_ANISOTROPY:
        raise SolverError(f"metric anisotropy {ratio:.3g} exceeds {MAX_ANISOTROPY}")
    if ratio > 5:
        log.warning("metric anisotropy %.3g: stencil angular error grows", ratio)
    A_half = np.ascontiguousarray(np.stack([A[..., 0, 0], A[..., 0, 1], A[..., 1, 1]], axis=-1))
    A0 = scene.metric.A(scene.k0)
    radius = init_radius_cells * h
    u, source = _source_init(scene, grid, free, radius,
                             lambda d: np.sqrt(np.einsum("...i,ij,...j->...", d, A0, d)))
    offsets = stencil_offsets(stencil)
    checks, counts = _edge_checks(offsets)
    kernels.dijkstra_kernel(u, free, A_half, offsets, checks, counts, float(h))
    u[~free] = np.inf
    field_ = DistanceField(grid, u, free, source, phi, scene.k0.copy(), scene.metric.kind,
                           {"solver": "graph", "stencil": len(offsets), "init_radius": radius,
                            "anisotropy": ratio})
    field_.meta["n_unreachable"] = field_.n_unreachable
    field_.meta["A_inv_fn"] = scene.metric.A_inv
    return field_


def solve(scene: Scene, h: float, **kwargs) -> DistanceField:
    """Pick fast marching for isotropic metrics, the graph solver otherwise."""
    if scene.metric.is_isotropic:
        return solve_isotropic_fmm(scene, h, **kwargs)
    return solve_anisotropic_graph(scene, h, **kwargs)


# -- gradients and residuals -----------------------------------------------------


@dataclass(frozen=True)
class GradientSample:
    vector: np.ndarray
    one_sided: bool


def numeric_gradient(field: DistanceField, x) -> GradientSample:
    """Upwind gradient at ``x``, bilinearly blended from the resolved nodes of its cell."""
    x = np.asarray(x, dtype=float)
    if not field.grid.contains(x):
        raise DomainError("point lies outside the grid")
    i, j = field.grid.index_of(x)
    if not field.free[i, j]:
        raise DomainError("point lies in an obstacle cell")
    gx, gy, one_sided = field.gradient_field
    o = field.grid.origin
    g = np.array(kernels.interp_grad_masked(gx, gy, float(x[0]), float(x[1]), o[0], o[1], field.h))
    if not np.all(np.isfinite(g)):
        raise DomainError("masked stencil: no resolved neighbours around the point")
    lo = np.clip(np.floor((x - o) / field.h).astype(int), 0, np.array(field.grid.dims) - 2)
    flag = bool(one_sided[lo[0]:lo[0] + 2, lo[1]:lo[1] + 2].any())
    return GradientSample(g, flag)


def obstacle_collar(field: DistanceField, cells: float) -> np.ndarray:
    """Free nodes within ``cells`` grid spacings of an obstacle node."""
    from scipy.ndimage import binary_dilation

    r = int(math.ceil(cells))
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    disk = xx * xx + yy * yy <= cells * cells + 1e-9
    return binary_dilation(~field.free, structure=disk) & field.free


def source_ball(field: DistanceField, radius: Optional[float] = None) -> np.ndarray:
    radius = field.init_radius if radius is None else radius
    return np.linalg.norm(field.grid.points - field.k0, axis=-1) <= radius + 1e-12


@dataclass(frozen=True)
class ResidualStats:
    median: float
    p95: float
    max: float
    n: int

    def as_dict(self) -> dict:
        return {"median": self.median, "p95": self.p95, "max": self.max, "n": self.n}


def eikonal_residual(field: DistanceField, exclusion: Optional[np.ndarray] = None,
                     metric=None) -> ResidualStats:
    """Distribution of ``|<A^-1 grad d, grad d> - 1|`` over non-excluded free nodes.

    ``metric`` is needed for non-identity fields (it provides ``A_inv``).
    """
    gx, gy, _ = field.gradient_field
    mask = field.free & np.isfinite(field.values) & np.isfinite(gx) & np.isfinite(gy)
    if exclusion is not None:
        mask &= ~exclusion
    g = np.stack([gx[mask], gy[mask]], axis=-1)
    if field.metric_kind == "identity":
        q = np.sum(g * g, axis=-1)
    else:
        if metric is None:
            raise SolverError("a metric is required for the residual of a non-identity field")
        Ainv = metric.A_inv(field.grid.points[mask])
        q = np.einsum("ni,nij,nj->n", g, Ainv, g)
    r = np.abs(q - 1.0)
    if r.size == 0:
        return ResidualStats(math.nan, math.nan, math.nan, 0)
    return ResidualStats(float(np.median(r)), float(np.percentile(r, 95)), float(np.max(r)), int(r.size))


def default_exclusion(field: DistanceField, singular: Optional[np.ndarray] = None,
                      collar_cells: float = 2.0, singular_dilation: int = 2) -> np.ndarray:
    """Source ball, obstacle collar and (dilated) singular cells."""
    from scipy.ndimage import binary_dilation

    excl = source_ball(field) | obstacle_collar(field, collar_cells)
    if singular is not None and singular.any():
        excl |= binary_dilation(singular, iterations=singular_dilation)
    return excl


# -- persistence -----------------------------------------------------------------


def write_field_csv(field: DistanceField, path) -> None:
    pts = field.grid.points.reshape(-1, 2)
    vals = field.values.reshape(-1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "d"])
        for (x, y), d in zip(pts, vals):
            w.writerow([f"{x:.10g}", f"{y:.10g}", "inf" if not np.isfinite(d) else f"{d:.17g}"])


def field_to_bytes(field: DistanceField) -> bytes:
    """Header (magic, version, nx, ny, h, origin) then values, row-major ``[i, j]``, little-endian f64."""
    nx, ny = field.grid.dims
    head = _HEADER.pack(FIELD_MAGIC, FIELD_VERSION, nx, ny, field.h, *field.grid.origin)
    return head + np.ascontiguousarray(field.values, dtype="<f8").tobytes()


def field_from_bytes(buf: bytes) -> tuple[Grid, np.ndarray]:
    magic, version, nx, ny, h, ox, oy = _HEADER.unpack_from(buf, 0)
    if magic != FIELD_MAGIC:
        raise SolverError("not a distance field dump (bad magic)")
    if version != FIELD_VERSION:
        raise SolverError(f"unsupported field dump version {version}")
    vals = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size, count=nx * ny).reshape(nx, ny).copy()
    return Grid((ox, oy), h, (nx, ny)), vals


def load_field(path, scene: Scene) -> DistanceField:
    """Reload a binary dump; masks and the level-set grid are rebuilt from the scene."""
    with open(path, "rb") as fh:
        grid, vals = field_from_bytes(fh.read())
    phi = _phi_grid(scene, grid)
    free = phi >= 0
    src = np.linalg.norm(grid.points - scene.k0, axis=-1) <= INIT_RADIUS_CELLS * grid.h + 1e-12
    return DistanceField(grid, vals, free, src & free, phi, scene.k0.copy(), scene.metric.kind,
                         {"init_radius": INIT_RADIUS_CELLS * grid.h})
