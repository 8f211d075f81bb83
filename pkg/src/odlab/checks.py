"""The acceptance battery: one verdict function per criterion.

A :class:`Bench` caches solved fields and singular masks so that criteria that
share a scene and resolution reuse the same solve.  Every check returns a
:class:`Verdict`; the runner embeds them in the report and the acceptance
tests assert on them.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .config import DEFAULT, Thresholds
from .eikonal import DistanceField, default_exclusion, eikonal_residual, solve
from .oracle import (DiskScene, corollary_defect_scan, disk_distance, disk_distance_many,
                     involute_curvature, involute_curvature_fd)
from .scene import Region, Scene, classify_region, convex_hull_2d, crescent_scene, disk_scene
from .semiconcavity import fit_exponent, oracle_fit
from .singular import (boundary_singular_points, detect_singular_set, hull_singularity_search,
                       integrate_singular_flow, local_propagation_probe, reachable_gradients_numeric)
from .tracer import minimize_energy

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"
H_MAIN = 0.005
DISK_SPOT = 2 * math.sqrt(3) + math.pi / 3
CONVERGENCE_H = (0.02, 0.01, 0.005)


@dataclass
class Verdict:
    name: str
    status: str
    metrics: dict = field(default_factory=dict)
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def line(self) -> str:
        return f"{self.status.upper():<12} {self.name}: {self.detail}"

    def as_dict(self) -> dict:
        return {"status": self.status, "metrics": _plain(self.metrics), "detail": self.detail}


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def _status(ok: bool) -> str:
    return PASS if ok else FAIL


class Bench:
    """Lazily solved fields and masks for the built-in scenes."""

    def __init__(self, thresholds: Thresholds = DEFAULT, seed: int = 0):
        self.thresholds = thresholds
        self.seed = seed
        self.scenes: dict[str, Scene] = {"disk": disk_scene(), "crescent": crescent_scene()}
        self._fields: dict = {}
        self._masks: dict = {}
        self.timings: dict = {}

    def field(self, name: str, h: float = H_MAIN) -> DistanceField:
        key = (name, h)
        if key not in self._fields:
            t = time.perf_counter()
            self._fields[key] = solve(self.scenes[name], h)
            self.timings[f"solve:{name}:{h}"] = time.perf_counter() - t
        return self._fields[key]

    def mask(self, name: str, h: float = H_MAIN) -> np.ndarray:
        key = (name, h)
        if key not in self._masks:
            self._masks[key] = detect_singular_set(self.field(name, h), self.scenes[name], self.thresholds)
        return self._masks[key]

    def boundary_singulars(self, name: str, h: float = H_MAIN) -> list:
        return boundary_singular_points(self.field(name, h), self.scenes[name], self.mask(name, h))


def disk_oracle_error(field_: DistanceField, scene: Scene) -> float:
    ex = disk_distance_many(DiskScene.from_scene(scene), field_.grid.points)
    ok = field_.free & np.isfinite(ex) & np.isfinite(field_.values)
    return float(np.max(np.abs(field_.values[ok] - ex[ok])))


# -- criteria -----------------------------------------------------------------


def check_oracle_agreement(bench: Bench) -> Verdict:
    scene = bench.scenes["disk"]
    t = time.perf_counter()
    f = solve(scene, H_MAIN)
    runtime = time.perf_counter() - t
    bench._fields.setdefault(("disk", H_MAIN), f)
    err = disk_oracle_error(f, scene)
    spot = f.value_at((-2.0, 0.0))
    spot_err = abs(spot - DISK_SPOT)
    ok = err <= 5 * H_MAIN and spot_err <= 5 * H_MAIN and runtime <= 60.0
    return Verdict("c01_oracle_agreement", _status(ok),
                   {"max_error": err, "max_error_h": err / H_MAIN, "spot_value": spot, "spot_error": spot_err},
                   f"max error {err / H_MAIN:.2f}h, d(-2,0)={spot:.5f} (exact {DISK_SPOT:.5f}), "
                   f"solve {'<= 60 s' if runtime <= 60 else f'{runtime:.1f} s > 60 s'}")


def check_eikonal_residual(bench: Bench) -> Verdict:
    f = bench.field("disk")
    excl = default_exclusion(f, bench.mask("disk"), bench.thresholds.collar_cells)
    stats = eikonal_residual(f, excl)
    ok = stats.median <= 0.05
    return Verdict("c02_eikonal_residual", _status(ok), stats.as_dict(),
                   f"median {stats.median:.4f}, p95 {stats.p95:.4f} over {stats.n} cells")


def check_hull_singularities(bench: Bench) -> Verdict:
    metrics = {}
    ok = True
    for name in ("disk", "crescent"):
        res = hull_singularity_search(bench.field(name), bench.scenes[name], bench.mask(name))
        metrics[name] = {"n_hull_points": len(res.points),
                         "first": res.points[0].tolist() if len(res.points) else None,
                         "argmax": res.argmax_point.tolist()}
        ok &= len(res.points) > 0
    return Verdict("c03_singular_on_hull_boundary", _status(ok), metrics,
                   ", ".join(f"{k}: {v['n_hull_points']} hull samples near the mask" for k, v in metrics.items()))


def _arc_checks(arc, h: float, p_tol: float = 0.05) -> dict:
    dd = np.diff(arc.d_values)
    need = (arc.speeds[:-1] ** 2 - p_tol) * h
    return {
        "n_steps": int(len(arc.times) - 1),
        "strictly_increasing": bool(np.all(dd > 0)),
        "increment_bound": bool(np.all(dd >= need - 1e-12)),
        "hull_dist_monotone": bool(np.all(np.diff(arc.hull_dist) >= -2 * h)),
        "stop_reason": arc.stop_reason,
        "flagged": bool(arc.flagged),
    }


def check_flow_monotone(bench: Bench) -> Verdict:
    scene = bench.scenes["disk"]
    f = bench.field("disk")
    t_max = 2 * scene.diameter()
    arc = integrate_singular_flow(f, scene, (-2.0, 0.0), t_max, bench.thresholds)
    m = _arc_checks(arc, f.h)
    ok = m["strictly_increasing"] and m["increment_bound"] and m["hull_dist_monotone"] and m["stop_reason"] == "bbox"
    return Verdict("c04_flow_strictly_increasing", _status(ok), m,
                   f"{m['n_steps']} steps, stop={m['stop_reason']}, d increasing={m['strictly_increasing']}, "
                   f"increment bound={m['increment_bound']}, hull distance monotone={m['hull_dist_monotone']}")


def check_flow_propagation(bench: Bench) -> Verdict:
    scene = bench.scenes["disk"]
    f = bench.field("disk")
    arc = integrate_singular_flow(f, scene, (-1.0, 0.0), 2 * scene.diameter(), bench.thresholds)
    # the oracle singular ray is {(x, 0): x <= -1}
    off = np.maximum(np.abs(arc.points[:, 1]), np.maximum(arc.points[:, 0] + 1.0, 0.0))
    dev = float(off.max())
    ok = dev <= 2 * f.h and arc.stop_reason == "bbox"
    return Verdict("c05_propagation_at_infinity", _status(ok),
                   {"max_ray_deviation": dev, "stop_reason": arc.stop_reason, "n_steps": len(arc.times) - 1},
                   f"max distance to the oracle ray {dev / f.h:.2f}h, stop={arc.stop_reason}")


def check_local_propagation(bench: Bench) -> Verdict:
    name = "crescent"
    f, scene, mask = bench.field(name), bench.scenes[name], bench.mask(name)
    pts = bench.boundary_singulars(name)
    probes = [local_propagation_probe(f, scene, p, 0.3, mask) for p in pts]
    ok = bool(probes) and all(p.chain_ok and p.chain_outside_obstacle for p in probes)
    return Verdict("c06_local_propagation", _status(ok), {"probes": [p.as_dict() for p in probes]},
                   f"{len(probes)} boundary singular point(s), chains ok: {[p.chain_ok for p in probes]}")


def check_regularity(bench: Bench) -> Verdict:
    scene = bench.scenes["disk"]
    f = bench.field("disk")
    th = bench.thresholds
    interior = fit_exponent(f, scene, "interior", n_pairs=48, seed=bench.seed, singular=bench.mask("disk"),
                            thresholds=th)
    oracle = oracle_fit(scene, "boundary_S", n_pairs=48, seed=bench.seed, thresholds=th)
    grid = fit_exponent(f, scene, "boundary_S", n_pairs=96, seed=bench.seed,
                        avoid=bench.boundary_singulars("disk"), thresholds=th)
    fits = [interior, oracle, grid]
    ok = (interior.alpha_hat >= 0.9 and 0.4 <= oracle.alpha_hat <= 0.6 and 0.35 <= grid.alpha_hat <= 0.65
          and all(fi.r2 >= th.r2_min for fi in fits))
    return Verdict("c07_regularity_exponents", _status(ok),
                   {"interior": interior.as_dict(), "boundary_S_oracle": oracle.as_dict(),
                    "boundary_S_grid": grid.as_dict()},
                   f"interior {interior.alpha_hat:.3f} (r2 {interior.r2:.2f}), boundary oracle "
                   f"{oracle.alpha_hat:.3f} (r2 {oracle.r2:.2f}), boundary grid {grid.alpha_hat:.3f} "
                   f"(r2 {grid.r2:.2f})")


def check_corollary_scan(bench: Bench) -> Verdict:
    scan = corollary_defect_scan([0.5, 0.9], [0.1, 0.05, 0.025, 0.0125])
    s05, s09 = float(scan.slopes[0]), float(scan.slopes[1])
    ok = abs(s05) < 0.05 and s09 > 0
    return Verdict("c08_corollary_scan", _status(ok), {"slope_alpha_0.5": s05, "slope_alpha_0.9": s09},
                   f"slope {s05:+.4f} at alpha=0.5, {s09:+.4f} at alpha=0.9")


def check_orthogonality(bench: Bench) -> Verdict:
    th = bench.thresholds
    out = {}
    ok = True
    for name, two_sided in (("disk", True), ("crescent", False)):
        f, scene = bench.field(name), bench.scenes[name]
        pts = bench.boundary_singulars(name)
        worst = -math.inf
        for p in pts:
            gs = reachable_gradients_numeric(f, scene, p, th)
            nu = scene.obstacle.normal(p)
            dots = gs.reachables @ nu
            worst = max(worst, float(np.max(np.abs(dots) if two_sided else dots)))
        out[name] = {"n_points": len(pts), "max_dot": worst}
        ok &= bool(pts) and worst <= th.normal_tol
    return Verdict("c09_reachable_orthogonality", _status(ok), out,
                   f"disk max |<p,nu>| {out['disk']['max_dot']:.4f}, crescent max <p,nu> "
                   f"{out['crescent']['max_dot']:.4f}")


def shadow_samples(scene: Scene, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lo, hi = scene.bbox
    out = []
    while len(out) < n:
        p = rng.uniform(lo + 0.25, hi - 0.25)
        if float(scene.obstacle.phi(p)) <= 0.05:
            continue
        if classify_region(scene, p) is Region.S:
            out.append(p)
    return np.array(out)


def check_energy(bench: Bench) -> Verdict:
    scene = bench.scenes["disk"]
    f = bench.field("disk")
    pts = shadow_samples(scene, 20, bench.seed)
    gaps = []
    for p in pts:
        E = minimize_energy(scene, p).E_value
        d = f.value_at(p)
        gaps.append(abs(math.sqrt(E) - d) / d)
    E0 = minimize_energy(scene, (-2.0, 0.0)).E_value
    target = disk_distance(DiskScene.from_scene(scene), (-2.0, 0.0)) ** 2
    e_rel = abs(E0 - target) / target
    ok = max(gaps) <= 0.03 and e_rel <= 0.02
    return Verdict("c10_energy_distance", _status(ok),
                   {"max_rel_gap": max(gaps), "E_at_-2_0": E0, "E_target": target, "E_rel_error": e_rel},
                   f"max |sqrt(E)-d|/d {max(gaps):.4f} over 20 shadow samples, E(-2,0)={E0:.4f} "
                   f"(target {target:.4f})")


def check_involute(bench: Bench) -> Verdict:
    worst = 0.0
    for R in (1.0, 2.0):
        for r in np.linspace(0.1, 2.0, 39):
            exact = involute_curvature(R, r)
            worst = max(worst, abs(involute_curvature_fd(R, r) - exact) / exact)
    return Verdict("c11_involute_curvature", _status(worst <= 0.01), {"max_rel_error": worst},
                   f"max relative error {worst:.2e}")


def check_no_critical_points(bench: Bench, n: int = 500) -> Verdict:
    scene = bench.scenes["disk"]
    f = bench.field("disk")
    th = bench.thresholds
    hull = convex_hull_2d(scene)
    rng = np.random.default_rng(bench.seed + 1)
    lo, hi = scene.bbox
    margin = (th.start_offset_cells + 1) * f.h
    src = th.source_exclusion_cells * f.h
    norms = []
    while len(norms) < n:
        p = rng.uniform(lo + margin, hi - margin)
        if hull.contains(p) or np.linalg.norm(p - scene.k0) <= src:
            continue
        norms.append(reachable_gradients_numeric(f, scene, p, th).min_norm)
    m = float(min(norms))
    # confirmed singular cells off the hull are the hardest case; reported alongside
    cells = f.grid.points[bench.mask("disk")]
    off = [c for c in cells if hull.distance(c) > 2 * f.h]
    sing = min((reachable_gradients_numeric(f, scene, c, th).min_norm for c in off[::10]), default=math.nan)
    return Verdict("c12_no_critical_points", _status(m >= th.p_eps),
                   {"min_norm_min": m, "n": n, "singular_cells_min_norm": sing},
                   f"smallest min-norm element {m:.4f} over {n} points (p_eps {th.p_eps}); "
                   f"{sing:.4f} over singular cells off the hull")


def convergence_factors(bench: Bench, hs=CONVERGENCE_H) -> tuple[list, list]:
    scene = bench.scenes["disk"]
    errs = [disk_oracle_error(bench.field("disk", h), scene) for h in hs]
    return errs, [errs[k] / errs[k + 1] for k in range(len(errs) - 1)]


def check_determinism_convergence(bench: Bench, report_bytes: Optional[Callable[[], bytes]] = None) -> Verdict:
    errs, factors = convergence_factors(bench)
    conv_ok = all(1.5 <= q <= 3.0 for q in factors)
    same = None
    if report_bytes is not None:
        same = report_bytes() == report_bytes()
    ok = conv_ok and (same is None or same)
    detail = "halving factors " + ", ".join(f"{q:.2f}" for q in factors)
    if same is not None:
        detail += f", identical report bytes: {same}"
    return Verdict("c13_determinism_convergence", _status(ok),
                   {"errors": errs, "factors": factors, "identical_reports": same}, detail)


CHECKS = [
    check_oracle_agreement,
    check_eikonal_residual,
    check_hull_singularities,
    check_flow_monotone,
    check_flow_propagation,
    check_local_propagation,
    check_regularity,
    check_corollary_scan,
    check_orthogonality,
    check_energy,
    check_involute,
    check_no_critical_points,
    check_determinism_convergence,
]

CRITERIA = [
    "c01_oracle_agreement",
    "c02_eikonal_residual",
    "c03_singular_on_hull_boundary",
    "c04_flow_strictly_increasing",
    "c05_propagation_at_infinity",
    "c06_local_propagation",
    "c07_regularity_exponents",
    "c08_corollary_scan",
    "c09_reachable_orthogonality",
    "c10_energy_distance",
    "c11_involute_curvature",
    "c12_no_critical_points",
    "c13_determinism_convergence",
]
