"""Experiment orchestration: solve, trace, detect, integrate, fit and report.

Every artifact is written whole (temp file, then rename).  ``report.json`` is
a pure function of the configuration: wall-clock timings go to
``timings.json`` instead, so identical configurations give identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, checks
from .checks import FAIL, INCONCLUSIVE, PASS, Verdict
from .config import DEFAULT, Thresholds
from .eikonal import (DistanceField, default_exclusion, eikonal_residual, field_to_bytes, solve)
from .errors import OdlabError, PreconditionError, SceneError, TraceError
from .oracle import DiskScene, corollary_defect_scan, disk_distance, disk_minimizers, oracle_table
from .render import render_svg
from .scene import (Region, Scene, classify_region, convex_hull_2d, crescent_scene, disk_scene, free_scene,
                    load_scene)
from .semiconcavity import fit_exponent, oracle_fit
from .singular import (boundary_singular_points, detect_singular_set, hull_singularity_search,
                       integrate_singular_flow, local_propagation_probe, reachable_gradients_numeric)
from .tracer import backtrace_minimizer, energy_distance_check, max_relative_gap

log = logging.getLogger(__name__)

SCHEMA = "odl-report/1"
COMMANDS = ("solve", "oracle", "minimize", "singular", "flow", "scscan", "report", "render")
FORMATS = ("csv", "bin", "ndjson", "svg")
BUILTIN = {"disk": disk_scene, "crescent": crescent_scene, "free": free_scene}
CRITERION_H = checks.H_MAIN
CONVENTION_NOTE = ("Metric length sqrt(<A v, v>) is primary; the eikonal residual uses A^-1. "
                   "Scene files may give A or its inverse (key 'A_inv'); the loader inverts the latter.")
INVOLUTE_NOTE = ("The curvature 1/(R r) of the involute c(r) = R(cos r + r sin r, sin r - r cos r) holds for "
                 "the angle parameter r and is confirmed by finite differences of the curve itself.")


@dataclass
class ExperimentConfig:
    scene_path: str
    h: float
    commands: list
    output_dir: Path
    seed: int = 0
    thresholds: Thresholds = DEFAULT
    fmt: str = "csv"
    n_samples: int = 20

    def validate(self) -> None:
        if not self.commands:
            raise PreconditionError("at least one command is required")
        bad = [c for c in self.commands if c not in COMMANDS]
        if bad:
            raise PreconditionError(f"unknown command(s): {', '.join(bad)}")
        if not (1e-4 <= self.h <= 0.1):
            raise PreconditionError("resolution h must lie in [1e-4, 0.1]")
        if self.fmt not in FORMATS:
            raise PreconditionError(f"format must be one of {FORMATS}")

    def canonical(self, scene: Scene) -> dict:
        return {"scene": scene.to_dict(), "h": self.h, "commands": list(self.commands), "seed": self.seed,
                "thresholds": self.thresholds.as_dict(), "format": self.fmt, "n_samples": self.n_samples}


@dataclass
class Report:
    verdicts: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors and all(v["status"] != FAIL for v in self.verdicts.values())

    def add(self, v: Verdict) -> None:
        self.verdicts[v.name] = v.as_dict()

    def to_json(self) -> dict:
        verdicts = {name: self.verdicts.get(name, {"status": INCONCLUSIVE, "metrics": {},
                                                   "detail": "not evaluated in this run"})
                    for name in checks.CRITERIA}
        for name, v in self.verdicts.items():
            verdicts.setdefault(name, v)
        return {
            "schema": SCHEMA,
            "verdicts": verdicts,
            "metrics": checks._plain(self.metrics),
            "provenance": self.provenance,
            "notes": {"metric_convention": CONVENTION_NOTE, "involute_parameterization": INVOLUTE_NOTE},
            "artifacts": sorted(self.artifacts),
            "errors": self.errors,
        }


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_atomic(path: Path, data) -> None:
    path = Path(path)
    mode = "wb" if isinstance(data, (bytes, bytearray)) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def resolve_scene(spec: str) -> Scene:
    """A JSON scene file, or ``builtin:<name>`` for the disk, crescent and free scenes."""
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in BUILTIN:
            raise SceneError(f"unknown builtin scene {name!r}; choose from {sorted(BUILTIN)}")
        return BUILTIN[name]()
    if not os.path.exists(spec):
        raise SceneError(f"scene file not found: {spec}")
    return load_scene(spec)


def _is_disk(scene: Scene) -> bool:
    return scene.obstacle is not None and scene.obstacle.kind == "disk" and scene.metric.is_identity


def _convex(scene: Scene) -> bool:
    return scene.obstacle is not None and scene.obstacle.kind in ("disk", "ellipse")


def _g(x) -> str:
    return "inf" if not math.isfinite(x) else repr(float(x))


class _Run:
    def __init__(self, config: ExperimentConfig, scene: Scene):
        self.cfg = config
        self.scene = scene
        self.out = Path(config.output_dir)
        self.report = Report()
        self.timings: dict = {}
        self.field: Optional[DistanceField] = None
        self.mask: Optional[np.ndarray] = None
        self.bsing: list = []
        self.arcs: list = []

    def add(self, v: Verdict, grid_dependent: bool = True) -> None:
        # Criterion tolerances are calibrated at CRITERION_H; a miss on a coarser grid is not a refutation.
        if grid_dependent and v.status == FAIL and self.cfg.h > CRITERION_H * (1 + 1e-9):
            v = Verdict(v.name, INCONCLUSIVE, v.metrics,
                        f"{v.detail} (h={self.cfg.h} is coarser than the criterion resolution {CRITERION_H})")
        self.report.add(v)

    def write(self, name: str, data) -> None:
        write_atomic(self.out / name, data)
        if name not in self.report.artifacts:
            self.report.artifacts.append(name)

    def rng(self, salt: int) -> np.random.Generator:
        return np.random.default_rng([self.cfg.seed, salt])

    # -- commands --------------------------------------------------------------

    def need_field(self) -> DistanceField:
        if self.field is None:
            self.cmd_solve()
        return self.field

    def need_mask(self) -> np.ndarray:
        if self.mask is None:
            f = self.need_field()
            self.mask = detect_singular_set(f, self.scene, self.cfg.thresholds)
            self.bsing = boundary_singular_points(f, self.scene, self.mask)
        return self.mask

    def cmd_solve(self):
        f = solve(self.scene, self.cfg.h)
        self.field = f
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "d"])
        pts = f.grid.points.reshape(-1, 2)
        for (x, y), d in zip(pts, f.values.reshape(-1)):
            w.writerow([f"{x:.10g}", f"{y:.10g}", "inf" if not np.isfinite(d) else f"{d:.17g}"])
        self.write("field.csv", buf.getvalue())
        if self.cfg.fmt == "bin":
            self.write("field.bin", field_to_bytes(f))
        m = {"dims": list(f.grid.dims), "h": f.h, "n_unreachable": f.n_unreachable, "solver": f.meta["solver"]}
        stats = eikonal_residual(f, default_exclusion(f, None, self.cfg.thresholds.collar_cells))
        m["residual_no_singular_exclusion"] = stats.as_dict()
        if _is_disk(self.scene):
            err = checks.disk_oracle_error(f, self.scene)
            m["oracle_max_error"] = err
            self.add(Verdict("c01_oracle_agreement", PASS if err <= 5 * f.h else FAIL,
                             {"max_error_h": err / f.h}, f"max error {err / f.h:.2f}h at h={f.h}"))
        self.report.metrics["solve"] = m

    def cmd_oracle(self):
        out = {}
        scan = corollary_defect_scan([0.0, 0.5, 0.9, 1.0], [0.1, 0.05, 0.025, 0.0125])
        out["corollary_scan"] = {"rows": scan.as_rows(), "slopes": dict(zip(map(str, scan.alphas), scan.slopes))}
        self.add(checks.check_corollary_scan(None), False)
        self.add(checks.check_involute(None), False)
        if _is_disk(self.scene):
            ds = DiskScene.from_scene(self.scene)
            mirror = 2 * ds.center - ds.k0
            mins = disk_minimizers(ds, mirror)
            out["mirror_point"] = {"x": mirror.tolist(), "d": disk_distance(ds, mirror),
                                   "n_minimizers": len(mins),
                                   "reachable_gradients": [(-p.initial_velocity()).tolist() for p in mins]}
            if self.field is not None:
                out["field_max_error"] = checks.disk_oracle_error(self.field, self.scene)
            lo, hi = self.scene.bbox
            xs = np.arange(lo[0], hi[0] + 1e-9, 0.25)
            ys = np.arange(lo[1], hi[1] + 1e-9, 0.25)
            lattice = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
            self.write("oracle.csv", oracle_table(ds, np.vstack([mirror, lattice])))
        self.write("oracle.json", dumps(checks._plain(out)))
        self.report.metrics["oracle"] = {"slopes": out["corollary_scan"]["slopes"]}

    def _samples(self, n: int, salt: int, region: Optional[Region] = None) -> np.ndarray:
        f = self.need_field()
        rng = self.rng(salt)
        lo, hi = self.scene.bbox
        pad = 0.1 * (hi - lo)
        out = []
        for _ in range(2000 * n):
            if len(out) >= n:
                break
            p = rng.uniform(lo + pad, hi - pad)
            if np.linalg.norm(p - self.scene.k0) < 10 * f.h or float(self.scene.phi(p)) <= 2 * f.h:
                continue
            if not np.isfinite(f.value_at(p)):
                continue
            if region is not None and classify_region(self.scene, p) is not region:
                continue
            out.append(p)
        return np.array(out).reshape(-1, 2)

    def cmd_minimize(self):
        f = self.need_field()
        lines = []
        gaps = []
        for p in self._samples(self.cfg.n_samples, 1):
            try:
                path = backtrace_minimizer(f, p, self.scene.metric)
            except TraceError as exc:
                lines.append(json.dumps({"start": p.tolist(), "error": str(exc)}, sort_keys=True))
                continue
            lines.append(json.dumps(checks._plain(path.to_json()), sort_keys=True))
            gaps.append(abs(path.tau - f.value_at(p)) / f.value_at(p))
        self.write("paths.ndjson", "\n".join(lines) + "\n")
        region = Region.S if self.scene.obstacle is not None and self.scene.metric.is_identity else None
        samples = self._samples(self.cfg.n_samples, 2, region)
        rows = energy_distance_check(self.scene, samples, f)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "E", "d", "rel_gap", "skipped"])
        for r in rows:
            w.writerow([_g(r.x[0]), _g(r.x[1]), "" if r.E is None else _g(r.E), "" if r.d is None else _g(r.d),
                        "" if r.rel_gap is None else _g(r.rel_gap), r.skipped or ""])
        self.write("energy.csv", buf.getvalue())
        gap = max_relative_gap(rows)
        self.report.metrics["minimize"] = {"max_tau_gap": max(gaps) if gaps else math.nan,
                                           "max_energy_gap": gap}
        if _is_disk(self.scene):
            self.add(Verdict("c10_energy_distance", PASS if gap <= 0.03 else FAIL,
                             {"max_rel_gap": gap, "n": len(rows)},
                             f"max |sqrt(E)-d|/d {gap:.4f} over {len(rows)} shadow samples"))

    def cmd_singular(self):
        f = self.need_field()
        mask = self.need_mask()
        th = self.cfg.thresholds
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "x", "y"])
        for i, j in np.argwhere(mask):
            p = f.grid.point(i, j)
            w.writerow([int(i), int(j), f"{p[0]:.10g}", f"{p[1]:.10g}"])
        self.write("singular.csv", buf.getvalue())
        m = {"n_singular": int(mask.sum()), "boundary_singular_points": [p.tolist() for p in self.bsing]}
        stats = eikonal_residual(f, default_exclusion(f, mask, th.collar_cells))
        m["residual"] = stats.as_dict()
        self.add(Verdict("c02_eikonal_residual", PASS if stats.median <= 0.05 else FAIL, stats.as_dict(),
                         f"median {stats.median:.4f}"))
        if self.scene.obstacle is not None:
            res = hull_singularity_search(f, self.scene, mask)
            m["hull_points"] = len(res.points)
            m["hull_argmax"] = res.argmax_point.tolist()
            self.add(Verdict("c03_singular_on_hull_boundary", PASS if len(res.points) else FAIL,
                             {"n_hull_points": len(res.points)},
                             f"{len(res.points)} hull samples within 2 cells of the mask"))
            probes = []
            worst = -math.inf
            two_sided = _convex(self.scene)
            for p in self.bsing:
                probes.append(local_propagation_probe(f, self.scene, p, 0.3, mask).as_dict())
                gs = reachable_gradients_numeric(f, self.scene, p, th)
                dots = gs.reachables @ self.scene.obstacle.normal(p)
                worst = max(worst, float(np.max(np.abs(dots) if two_sided else dots)))
            m["propagation"] = probes
            if self.bsing:
                ok = all(pr["chain_ok"] and pr["chain_outside_obstacle"] for pr in probes)
                self.add(Verdict("c06_local_propagation", PASS if ok else FAIL, {"probes": probes},
                                 f"{len(probes)} boundary singular point(s)"))
                self.add(Verdict("c09_reachable_orthogonality", PASS if worst <= th.normal_tol else FAIL,
                                 {"max_dot": worst, "two_sided": two_sided},
                                 f"max {'|<p,nu>|' if two_sided else '<p,nu>'} {worst:.4f}"))
            hull = convex_hull_2d(self.scene)
            rng = self.rng(3)
            lo, hi = self.scene.bbox
            margin = (th.start_offset_cells + 1) * f.h
            norms = []
            for _ in range(50000):
                if len(norms) >= 500:
                    break
                p = rng.uniform(lo + margin, hi - margin)
                if hull.contains(p) or np.linalg.norm(p - self.scene.k0) <= th.source_exclusion_cells * f.h:
                    continue
                if not np.isfinite(f.value_at(p)):
                    continue
                norms.append(reachable_gradients_numeric(f, self.scene, p, th).min_norm)
            mn = float(min(norms)) if norms else math.nan
            self.add(Verdict("c12_no_critical_points", PASS if mn >= th.p_eps else FAIL,
                             {"min_norm_min": mn, "n": len(norms)}, f"smallest min-norm {mn:.4f}"))
        self.report.metrics["singular"] = m

    def cmd_flow(self):
        f = self.need_field()
        self.need_mask()
        th = self.cfg.thresholds
        t_max = 2 * self.scene.diameter()
        seeds = [np.asarray(p) for p in self.bsing]
        if _is_disk(self.scene):
            ds = DiskScene.from_scene(self.scene)
            u = (ds.k0 - ds.center) / np.linalg.norm(ds.k0 - ds.center)
            seeds.append(ds.center - 2 * ds.R * u)
        lines, summaries = [], []
        all_ok = True
        judged = 0
        for x0 in seeds:
            arc = integrate_singular_flow(f, self.scene, x0, t_max, th)
            self.arcs.append(arc.points)
            for row in arc.rows():
                row["seed"] = [float(v) for v in x0]
                lines.append(json.dumps(row, sort_keys=True))
            s = checks._arc_checks(arc, f.h)
            s["seed"] = [float(v) for v in x0]
            summaries.append(s)
            # an arc blocked by the obstacle at its first steps has no monotonicity to test
            if arc.stop_reason != "obstacle":
                judged += 1
                all_ok &= s["strictly_increasing"] and s["increment_bound"] and s["hull_dist_monotone"]
        self.write("arcs.ndjson", "\n".join(lines) + ("\n" if lines else ""))
        self.report.metrics["flow"] = summaries
        if judged:
            self.add(Verdict("c04_flow_strictly_increasing", PASS if all_ok else FAIL,
                             {"arcs": summaries}, f"{judged} arc(s) judged of {len(seeds)}"))
        if seeds and _convex(self.scene):
            reach = all(s["stop_reason"] == "bbox" for s in summaries)
            self.add(Verdict("c05_propagation_at_infinity", PASS if reach else FAIL,
                             {"stop_reasons": [s["stop_reason"] for s in summaries]},
                             "all arcs reach the bbox" if reach else "an arc stopped early"))

    def cmd_scscan(self):
        f = self.need_field()
        th = self.cfg.thresholds
        mask = self.need_mask()
        self.report.metrics["n_singular"] = int(mask.sum())
        fits = {"interior": fit_exponent(f, self.scene, "interior", seed=self.cfg.seed, singular=mask,
                                         thresholds=th).as_dict()}
        ok = fits["interior"]["alpha_hat"] >= 0.9 and fits["interior"]["r2"] >= th.r2_min
        if self.scene.obstacle is not None and self.scene.metric.is_identity:
            fits["boundary_S"] = fit_exponent(f, self.scene, "boundary_S", n_pairs=96, seed=self.cfg.seed,
                                              avoid=self.bsing, thresholds=th).as_dict()
        if _is_disk(self.scene):
            fits["boundary_S_oracle"] = oracle_fit(self.scene, seed=self.cfg.seed, thresholds=th).as_dict()
            g, o = fits["boundary_S"], fits["boundary_S_oracle"]
            ok &= 0.35 <= g["alpha_hat"] <= 0.65 and 0.4 <= o["alpha_hat"] <= 0.6
            ok &= g["r2"] >= th.r2_min and o["r2"] >= th.r2_min
        self.write("fits.json", dumps(checks._plain(fits)))
        self.report.metrics["scscan"] = fits
        detail = ", ".join(f"{k} {v['alpha_hat']:.3f}" for k, v in fits.items())
        self.add(Verdict("c07_regularity_exponents", PASS if ok else FAIL, {}, detail))

    def cmd_render(self):
        text = render_svg(self.scene, self.need_field(), self.mask, self.arcs)
        self.write("field.svg", text)

    def cmd_report(self):
        self.write("report.json", dumps(self.report.to_json()))


def run(config: ExperimentConfig) -> Report:
    """Execute the configured commands in order; see the module docstring for outputs."""
    config.validate()
    scene = resolve_scene(config.scene_path)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    r = _Run(config, scene)
    canon = config.canonical(scene)
    r.report.provenance = {
        "config_hash": hashlib.sha256(json.dumps(canon, sort_keys=True).encode()).hexdigest(),
        "version": __version__,
        "config": canon,
    }
    for cmd in config.commands:
        t = time.perf_counter()
        try:
            getattr(r, f"cmd_{cmd}")()
        except OdlabError as exc:
            r.report.errors.append({"command": cmd, "error": type(exc).__name__, "message": str(exc)})
            write_atomic(out / "errors.json", dumps({"completed": sorted(r.report.artifacts),
                                                    "errors": r.report.errors}))
            log.error("command %s failed: %s", cmd, exc)
            break
        finally:
            r.timings[cmd] = time.perf_counter() - t
    write_atomic(out / "timings.json", dumps(r.timings))
    return r.report


def run_acceptance(output_dir, seed: int = 0, thresholds: Thresholds = DEFAULT, echo=print) -> Report:
    """Run the full acceptance battery and write ``report.json``."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    bench = checks.Bench(thresholds, seed)
    report = Report()
    report.provenance = {"version": __version__, "mode": "acceptance", "seed": seed,
                         "thresholds": thresholds.as_dict()}
    timings = {}
    for fn in checks.CHECKS:
        t = time.perf_counter()
        if fn is checks.check_determinism_convergence:
            v = fn(bench, report_bytes=lambda: determinism_probe(seed, thresholds))
        else:
            v = fn(bench)
        timings[v.name] = time.perf_counter() - t
        report.add(v)
        if echo:
            echo(v.line())
    write_atomic(out / "report.json", dumps(report.to_json()))
    report.artifacts.append("report.json")
    write_atomic(out / "timings.json", dumps(timings))
    return report


def determinism_probe(seed: int, thresholds: Thresholds = DEFAULT) -> bytes:
    """Bytes of ``report.json`` from a small end-to-end run in a fresh directory."""
    with tempfile.TemporaryDirectory() as tmp:
        cfg = ExperimentConfig("builtin:disk", 0.02, ["solve", "singular", "flow", "scscan", "report"],
                               Path(tmp), seed, thresholds, n_samples=5)
        run(cfg)
        return (Path(tmp) / "report.json").read_bytes()
