import math

import numpy as np
import pytest

from odlab import MetricField, Scene, free_scene
from odlab.errors import DomainError, PreconditionError, TraceError
from odlab.oracle import DiskScene, disk_distance, disk_minimizers
from odlab.tracer import (backtrace_minimizer, energy_distance_check, initial_velocity, max_relative_gap,
                          minimize_energy, path_length)


def test_path_length_polyline():
    pts = np.array([[0.0, 0.0], [3.0, 0.0], [3.0, 4.0]])
    assert path_length(pts) == pytest.approx(7.0)
    m = MetricField.constant([[4.0, 0.0], [0.0, 1.0]])
    assert path_length(pts, m) == pytest.approx(10.0)
    with pytest.raises(PreconditionError):
        path_length(pts[:1])


def test_backtrace_visible_point_is_straight(disk, disk_field):
    path = backtrace_minimizer(disk_field, (2.5, 2.0))
    assert path.tau == pytest.approx(math.hypot(0.5, 2.0), abs=3 * disk_field.h)
    np.testing.assert_allclose(path.points[-1], disk.k0)
    assert path.contact_intervals == []
    # the last segment crosses the initialization ball straight to k0
    steps = np.linalg.norm(np.diff(path.points[:-1], axis=0), axis=1)
    assert steps.max() <= 0.5 * disk_field.h + 1e-12
    assert np.linalg.norm(path.points[-2] - disk.k0) <= disk_field.init_radius + 1e-12


def test_backtrace_shadow_point_wraps(disk, disk_field):
    x = (-2.0, 0.6)
    path = backtrace_minimizer(disk_field, x)
    exact = disk_distance(DiskScene.from_scene(disk), x)
    assert path.tau == pytest.approx(exact, rel=0.01)
    assert np.all(np.linalg.norm(path.points, axis=1) >= 1.0 - 0.5 * disk_field.h)
    assert path.contact_intervals, "the minimizer should slide along the disk"
    v = initial_velocity(path, 0.1)
    v_exact = disk_minimizers(DiskScene.from_scene(disk), x)[0].initial_velocity()
    assert np.dot(v, v_exact) > math.cos(math.radians(3))


def test_backtrace_tau_matches_field(disk_field):
    for x in ((-1.5, -1.5), (0.0, 2.0), (-2.7, 0.2)):
        path = backtrace_minimizer(disk_field, x)
        assert abs(path.tau - disk_field.value_at(x)) / disk_field.value_at(x) < 0.02
        assert path.to_json()["n_points"] == len(path.points)


def test_backtrace_errors(disk_field):
    with pytest.raises(DomainError):
        backtrace_minimizer(disk_field, (0.0, 0.0))
    with pytest.raises(DomainError):
        backtrace_minimizer(disk_field, (5.0, 0.0))


def test_energy_free_space_is_squared_length():
    s = free_scene()
    res = minimize_energy(s, (0.8, 0.6), n_knots=32)
    assert res.E_value == pytest.approx(1.0, rel=1e-4)
    assert res.unit_speed_defect < 1e-3


def test_energy_anisotropic_constant_metric():
    A = np.array([[2.0, 0.3], [0.3, 1.0]])
    s = Scene(None, (0.0, 0.0), MetricField.constant(A), ((-1.0, -1.0), (1.0, 1.0)))
    x = np.array([0.7, -0.4])
    res = minimize_energy(s, x, n_knots=32)
    assert res.E_value == pytest.approx(x @ A @ x, rel=1e-4)


def test_energy_at_mirror_point(disk):
    res = minimize_energy(disk, (-2.0, 0.0))
    target = (2 * math.sqrt(3) + math.pi / 3) ** 2  # 20.3518
    assert res.E_value == pytest.approx(target, rel=0.02)
    assert np.all(np.linalg.norm(res.path.points, axis=1) >= 1 - 1e-9)


def test_energy_inside_obstacle(disk):
    with pytest.raises(DomainError):
        minimize_energy(disk, (0.1, 0.0))
    with pytest.raises(PreconditionError):
        minimize_energy(disk, (-2.0, 0.0), n_knots=8)


def test_energy_distance_check_rows(disk, coarse_disk_field):
    rows = energy_distance_check(disk, [(-2.0, 0.5), (2.02, 0.0)], coarse_disk_field, n_knots=64)
    assert rows[1].skipped == "near_target"
    assert rows[0].rel_gap < 0.03
    assert max_relative_gap(rows) == rows[0].rel_gap
    ds = DiskScene.from_scene(disk)
    rows = energy_distance_check(disk, [(-2.0, -0.5)], distance=lambda p: disk_distance(ds, p), n_knots=64)
    assert rows[0].rel_gap < 0.01
    with pytest.raises(PreconditionError):
        energy_distance_check(disk, [(-2.0, 0.5)])
