import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull

from odlab.errors import DomainError, GeometryError, SceneError, UnsupportedError
from odlab.scene import (Crescent, Disk, Ellipse, MetricField, Region, Scene, boundary_curvature, classify_region,
                         convex_hull_2d, crescent_scene, disk_scene, load_scene, monotone_chain, outward_normal,
                         project_boundary, signed_distance)

coords = st.floats(-2.9, 2.9, allow_nan=False)


def test_disk_queries(disk):
    assert signed_distance(disk, (2.0, 0.0)) == pytest.approx(1.0)
    assert signed_distance(disk, (0.5, 0.0)) == pytest.approx(-0.5)
    np.testing.assert_allclose(project_boundary(disk, (0.0, 2.0)), [0.0, 1.0])
    np.testing.assert_allclose(outward_normal(disk, (0.0, -1.0)), [0.0, -1.0])
    assert boundary_curvature(disk, (1.0, 0.0)) == pytest.approx(1.0)


def test_out_of_bbox_rejected(disk):
    with pytest.raises(DomainError):
        signed_distance(disk, (5.0, 0.0))


def test_curvature_needs_boundary_point(disk):
    with pytest.raises(DomainError):
        boundary_curvature(disk, (1.5, 0.0))


@settings(max_examples=60, deadline=None)
@given(coords, coords)
def test_disk_projection_lands_on_boundary(x, y):
    obs = Disk((0.0, 0.0), 1.0)
    if math.hypot(x, y) < 1e-3:
        return
    q = obs.project(np.array([x, y]))
    assert abs(float(obs.phi(q))) < 1e-9
    assert abs(obs.signed_distance(np.array([x, y]))) == pytest.approx(np.linalg.norm(q - [x, y]), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(coords, coords)
def test_ellipse_projection_is_closest(x, y):
    obs = Ellipse((0.0, 0.0), (1.5, 0.7))
    p = np.array([x, y])
    q = obs.project(p)
    assert abs(float(obs.phi(q))) < 1e-7
    samples = obs.boundary_samples(4000)
    assert np.linalg.norm(q - p) <= np.min(np.linalg.norm(samples - p, axis=1)) + 1e-5


def test_ellipse_curvature_at_vertices():
    obs = Ellipse((0.0, 0.0), (2.0, 1.0))
    # a / b^2 at the ends of the major axis, b / a^2 at the minor ones
    assert obs.curvature(np.array([2.0, 0.0])) == pytest.approx(2.0, rel=1e-6)
    assert obs.curvature(np.array([0.0, 1.0])) == pytest.approx(0.25, rel=1e-6)


def test_crescent_geometry(crescent):
    obs = crescent.obstacle
    assert float(obs.phi(np.array([-0.5, 0.0]))) < 0
    assert float(obs.phi(np.array([0.5, 0.0]))) > 0  # inside the bite
    assert len(obs.corners) == 2
    for c in obs.corners:
        assert np.linalg.norm(c) == pytest.approx(1.0)
        assert np.linalg.norm(c - [0.8, 0.0]) == pytest.approx(0.9)
    # the normal on the concave arc points into the bite
    np.testing.assert_allclose(obs.normal(np.array([-0.1, 0.0])), [1.0, 0.0], atol=1e-9)


def test_crescent_needs_overlapping_disks():
    with pytest.raises((SceneError, GeometryError)):
        Crescent((0.0, 0.0), 1.0, (3.0, 0.0), 0.5)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(-40, 40), st.integers(-40, 40)), min_size=4, max_size=40, unique=True))
def test_monotone_chain_matches_qhull(pts):
    P = np.array(pts, dtype=float) / 8
    try:
        ref = ConvexHull(P)
    except Exception:
        return
    try:
        hull = monotone_chain(P)
    except GeometryError:
        return
    assert set(map(tuple, hull)) == set(map(tuple, P[ref.vertices]))


def test_hull_of_crescent_is_disk_like(crescent):
    hull = convex_hull_2d(crescent)
    # the bite does not change the hull area by much: the outer arc spans more than half the circle
    assert hull.contains(np.array([0.5, 0.0]))
    assert not hull.contains(np.array([1.2, 0.0]))
    assert hull.distance(np.array([-2.0, 0.0])) == pytest.approx(1.0, abs=1e-3)
    assert hull.area() < math.pi


def test_collinear_hull_rejected():
    with pytest.raises(GeometryError):
        monotone_chain([(0, 0), (1, 1), (2, 2)])


def test_region_classification(disk):
    assert classify_region(disk, (-2.0, 0.0)) is Region.S
    assert classify_region(disk, (2.0, 2.0)) is Region.I
    # tangent line from k0 grazes the disk: points beyond the tangency are still visible
    assert classify_region(disk, (0.0, 1.2)) is Region.I
    with pytest.raises(DomainError):
        classify_region(disk, (0.1, 0.1))


def test_region_requires_euclidean_metric():
    s = Scene(Disk((0, 0), 1), (2.0, 0.0), MetricField.constant([[2.0, 0.0], [0.0, 1.0]]))
    with pytest.raises(UnsupportedError):
        classify_region(s, (-2.0, 0.0))


def test_scene_validation():
    with pytest.raises(SceneError):
        Scene(Disk((0, 0), 1), (0.2, 0.0))
    with pytest.raises(SceneError):
        Scene(Disk((0, 0), 1), (2.0, 0.0), bbox=((-0.5, -3.0), (3.0, 3.0)))
    with pytest.raises(SceneError):
        Scene(None, (5.0, 0.0))


def test_metric_conventions():
    A = [[4.0, 1.0], [1.0, 2.0]]
    m = MetricField.constant(A)
    m_inv = MetricField.constant(np.linalg.inv(A), inverse=True)
    np.testing.assert_allclose(m.A(np.zeros(2)), m_inv.A(np.zeros(2)))
    assert m.anisotropy(np.zeros(2)) > 1
    with pytest.raises(SceneError):
        MetricField.constant([[1.0, 0.0], [0.0, -1.0]])
    iso = MetricField.isotropic(1.0, [{"center": [0, 0], "amplitude": 1.0, "width": 0.5}])
    assert float(iso.a(np.zeros(2))) == pytest.approx(2.0)
    with pytest.raises(UnsupportedError):
        m.a(np.zeros(2))


def test_load_scene_roundtrip(tmp_path, crescent):
    p = tmp_path / "s.json"
    p.write_text(json.dumps(crescent.to_dict()))
    s = load_scene(p)
    assert s.to_dict() == crescent.to_dict()


def test_load_scene_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "k0": [2, 0],\n  "bbox": [[-3, -3], [3, 3]]\n  "obstacle": null\n}\n')
    with pytest.raises(SceneError, match="line 4"):
        load_scene(p)


def test_load_scene_inverse_metric(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"k0": [0, 0], "bbox": [[-1, -1], [1, 1]],
                             "metric": {"kind": "constant", "A_inv": [[0.5, 0.0], [0.0, 1.0]]}}))
    np.testing.assert_allclose(load_scene(p).metric.A(np.zeros(2)), [[2.0, 0.0], [0.0, 1.0]])


def test_unknown_obstacle_kind():
    with pytest.raises(SceneError):
        Scene.from_dict({"k0": [2, 0], "bbox": [[-3, -3], [3, 3]], "obstacle": {"kind": "torus"}})
    with pytest.raises(SceneError):
        Scene.from_dict({"bbox": [[-3, -3], [3, 3]]})
