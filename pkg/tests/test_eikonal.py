import math
import os
import subprocess
import sys

import numpy as np
import pytest

from odlab import MetricField, Scene, disk_scene, free_scene, solve, solve_anisotropic_graph, solve_isotropic_fmm
from odlab.eikonal import (default_exclusion, eikonal_residual, field_from_bytes, field_to_bytes, load_field,
                           numeric_gradient, obstacle_collar, write_field_csv)
from odlab.errors import DomainError, SolverError
from odlab.oracle import DiskScene, disk_distance_many
from odlab.scene import Disk


def test_free_space_is_euclidean(free_field):
    pts = free_field.grid.points
    exact = np.linalg.norm(pts, axis=-1)
    err = np.abs(free_field.values - exact)
    assert err.max() < 3 * free_field.h
    assert free_field.n_unreachable == 0


def test_disk_error_within_five_cells(disk, disk_field):
    ex = disk_distance_many(DiskScene.from_scene(disk), disk_field.grid.points)
    ok = disk_field.free & np.isfinite(ex)
    assert np.max(np.abs(disk_field.values[ok] - ex[ok])) <= 5 * disk_field.h
    assert np.all(np.isinf(disk_field.values[~disk_field.free]))


def test_mirror_point_value(disk_field):
    assert disk_field.value_at((-2.0, 0.0)) == pytest.approx(2 * math.sqrt(3) + math.pi / 3, abs=5 * 0.01)


def test_error_shrinks_with_h(disk):
    ds = DiskScene.from_scene(disk)
    errs = []
    for h in (0.04, 0.02):
        f = solve(disk, h)
        ex = disk_distance_many(ds, f.grid.points)
        ok = f.free & np.isfinite(ex)
        errs.append(np.max(np.abs(f.values[ok] - ex[ok])))
    assert errs[1] < errs[0]


def test_isotropic_slowness_scales_distance():
    s = free_scene(metric=MetricField.isotropic(4.0))
    f = solve(s, 0.02)
    # length sqrt(<A v, v>) with A = 4 I doubles every distance
    assert f.value_at((0.6, 0.0)) == pytest.approx(1.2, abs=0.05)


def test_graph_solver_matches_fmm_for_identity(free):
    g = solve_anisotropic_graph(free, 0.02)
    f = solve(free, 0.02)
    m = np.linalg.norm(f.grid.points, axis=-1) > 0.2
    assert np.max(np.abs(g.values[m] - f.values[m]) / f.values[m]) < 0.03


@pytest.mark.parametrize("stencil, tol", [(2, 0.07), (4, 0.02)])
def test_constant_anisotropic_metric(stencil, tol):
    # the error is dominated by the angular gap of the stencil, not by h
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    s = Scene(None, (0.0, 0.0), MetricField.constant(A), ((-1.0, -1.0), (1.0, 1.0)))
    f = solve(s, 0.02, stencil=stencil)
    assert f.meta["solver"] == "graph"
    pts = f.grid.points
    exact = np.sqrt(np.einsum("...i,ij,...j->...", pts, A, pts))
    m = exact > 0.2
    assert np.max(np.abs(f.values[m] - exact[m]) / exact[m]) < tol
    stats = eikonal_residual(f, default_exclusion(f), metric=s.metric)
    assert stats.median < 0.1


def test_inverse_metric_convention():
    A = [[3.0, 0.0], [0.0, 1.0]]
    a = Scene(None, (0.0, 0.0), MetricField.constant(A), ((-1.0, -1.0), (1.0, 1.0)))
    b = Scene(None, (0.0, 0.0), MetricField.constant(np.linalg.inv(A), inverse=True), ((-1.0, -1.0), (1.0, 1.0)))
    np.testing.assert_allclose(solve(a, 0.05).values, solve(b, 0.05).values)


def test_anisotropy_cap():
    s = Scene(None, (0.0, 0.0), MetricField.constant([[400.0, 0.0], [0.0, 1.0]]), ((-1.0, -1.0), (1.0, 1.0)))
    with pytest.raises(SolverError):
        solve_anisotropic_graph(s, 0.05)


def test_fmm_rejects_general_metric():
    s = Scene(None, (0.0, 0.0), MetricField.constant([[2.0, 0.0], [0.0, 1.0]]), ((-1.0, -1.0), (1.0, 1.0)))
    with pytest.raises(SolverError):
        solve_isotropic_fmm(s, 0.05)


def test_too_coarse_grid():
    with pytest.raises(SolverError):
        solve(free_scene(), 0.5)


def test_enclosed_pocket_is_unreachable(caplog):
    # a thin ring splits the domain; the region inside the ring cannot be reached
    from odlab.scene import ImplicitObstacle

    def phi(x):
        r = np.linalg.norm(np.asarray(x), axis=-1)
        return np.abs(r - 0.5) - 0.05

    s = Scene(ImplicitObstacle(phi, (np.array([-0.55, -0.55]), np.array([0.55, 0.55]))), (0.9, 0.0),
              bbox=((-1.0, -1.0), (1.0, 1.0)))
    f = solve(s, 0.02)
    assert f.n_unreachable > 0
    i, j = f.grid.index_of((0.0, 0.0))
    assert np.isinf(f.values[i, j])
    assert math.isnan(f.value_at((0.0, 0.0)))


def test_residual_small_off_singular_set(disk_field):
    stats = eikonal_residual(disk_field, default_exclusion(disk_field))
    assert stats.median < 0.05
    assert stats.n > 100000


def test_numeric_gradient(disk_field):
    g = numeric_gradient(disk_field, (2.5, 1.5))
    expected = np.array([0.5, 1.5]) / math.hypot(0.5, 1.5)
    np.testing.assert_allclose(g.vector, expected, atol=0.02)
    with pytest.raises(DomainError):
        numeric_gradient(disk_field, (0.0, 0.0))
    with pytest.raises(DomainError):
        numeric_gradient(disk_field, (4.0, 0.0))


def test_collar_width(disk_field):
    c = obstacle_collar(disk_field, 2)
    r = np.linalg.norm(disk_field.grid.points[c], axis=-1)
    assert r.min() >= 1.0 and r.max() <= 1.0 + 2.01 * disk_field.h * math.sqrt(2)


def test_binary_roundtrip(tmp_path, disk, coarse_disk_field):
    buf = field_to_bytes(coarse_disk_field)
    assert len(buf) == 40 + 8 * coarse_disk_field.values.size
    grid, vals = field_from_bytes(buf)
    assert grid.dims == coarse_disk_field.grid.dims and grid.h == coarse_disk_field.h
    np.testing.assert_array_equal(grid.origin, coarse_disk_field.grid.origin)
    assert vals.tobytes() == coarse_disk_field.values.tobytes()
    p = tmp_path / "f.bin"
    p.write_bytes(buf)
    again = load_field(p, disk)
    assert np.array_equal(again.values, coarse_disk_field.values, equal_nan=True)
    assert np.array_equal(again.free, coarse_disk_field.free)
    with pytest.raises(SolverError):
        field_from_bytes(b"XXXX" + buf[4:])


def test_csv_dump(tmp_path, coarse_disk_field):
    p = tmp_path / "f.csv"
    write_field_csv(coarse_disk_field, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "x,y,d"
    assert len(lines) == coarse_disk_field.values.size + 1
    assert any(line.endswith(",inf") for line in lines)


def test_k0_inside_obstacle():
    s = disk_scene()
    object.__setattr__(s, "k0", np.array([0.1, 0.0]))
    with pytest.raises(SolverError):
        solve(s, 0.05)


_PARITY = """
import numpy as np
from odlab import crescent_scene, solve
from odlab.singular import detect_singular_set
f = solve(crescent_scene(), 0.05)
m = detect_singular_set(f, crescent_scene())
np.save({out!r}, np.concatenate([f.values.ravel(), m.ravel().astype(float)]))
"""


def test_interpreted_fallback_matches_jit(tmp_path):
    outs = []
    for flag in ("0", "1"):
        out = str(tmp_path / f"v{flag}.npy")
        env = dict(os.environ, ODLAB_DISABLE_JIT=flag)
        subprocess.run([sys.executable, "-c", _PARITY.format(out=out)], env=env, check=True)
        outs.append(np.load(out))
    np.testing.assert_allclose(outs[0], outs[1], rtol=1e-12, atol=1e-12)
