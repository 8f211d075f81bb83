import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odlab.errors import DomainError, PreconditionError, UnsupportedError
from odlab.semiconcavity import exponent_map, fit_exponent, fit_exponent_fn, oracle_fit, pooled_slope, sc_defect

pt = st.tuples(st.floats(-5, 5), st.floats(-5, 5))


def sq(P):
    return np.sum(np.asarray(P) ** 2, axis=-1)


@settings(max_examples=60, deadline=None)
@given(pt, pt, st.floats(0, 1))
def test_defect_of_square_norm(x, y, lam):
    d = sc_defect(sq, x, y, lam)
    expected = lam * (1 - lam) * np.sum((np.array(x) - np.array(y)) ** 2)
    assert d.defect == pytest.approx(expected, abs=1e-9 * (1 + expected))
    assert d.separation == pytest.approx(np.linalg.norm(np.subtract(x, y)))


@settings(max_examples=30, deadline=None)
@given(pt, pt, st.floats(0, 1))
def test_defect_of_affine_is_zero(x, y, lam):
    d = sc_defect(lambda P: 2 * np.asarray(P)[..., 0] - np.asarray(P)[..., 1] + 3, x, y, lam)
    assert d.defect == pytest.approx(0.0, abs=1e-9)


def test_defect_rejects_bad_lambda():
    with pytest.raises(PreconditionError):
        sc_defect(sq, (0, 0), (1, 1), 1.5)


def test_defect_on_field_checks_segment(disk_field):
    with pytest.raises(PreconditionError):
        sc_defect(disk_field, (-2.0, 0.0), (2.0, 0.5), 0.5)
    with pytest.raises(PreconditionError):
        sc_defect(disk_field, (2.01, 0.0), (2.5, 0.5), 0.5)
    # the distance function is concave across its singular ray: negative defect there
    d = sc_defect(disk_field, (-2.0, 0.3), (-2.0, -0.3), 0.5)
    assert d.defect < 0


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.5, 2.0), st.lists(st.floats(0.1, 10.0), min_size=2, max_size=6))
def test_pooled_slope_recovers_power(alpha, constants):
    s = np.geomspace(1e-3, 1e-1, 8)
    fams = [(s, c * s ** (1 + alpha)) for c in constants]
    slope, r2, C, n = pooled_slope(fams)
    assert slope == pytest.approx(1 + alpha, abs=1e-9)
    assert r2 == pytest.approx(1.0)
    assert C == pytest.approx(max(constants), rel=1e-9)
    assert n == 8 * len(constants)


def test_pooled_slope_drops_nonpositive_families():
    s = np.geomspace(1e-2, 1.0, 5)
    assert pooled_slope([(s, -s)])[3] == 0
    assert np.isnan(pooled_slope([])[0])


def test_fn_fit_smooth_and_three_halves():
    anchors = [((0.3 * k, -0.2 * k), np.array([np.cos(k), np.sin(k)])) for k in range(6)]
    smooth = fit_exponent_fn(lambda P: np.exp(np.asarray(P)[..., 0]) + sq(P), None, "interior", anchors=anchors)
    assert smooth.alpha_hat == pytest.approx(1.0, abs=0.05)
    # |t|^(3/2) across t = 0: exponent 1/2 exactly
    kink = [((0.0, 0.0), np.array([1.0, 0.0])), ((0.0, 0.5), np.array([-1.0, 0.0]))]
    frac = fit_exponent_fn(lambda P: np.abs(np.asarray(P)[..., 0]) ** 1.5, None, "interior", anchors=kink)
    assert frac.alpha_hat == pytest.approx(0.5, abs=1e-6)
    assert frac.r2 == pytest.approx(1.0)
    with pytest.raises(PreconditionError):
        fit_exponent_fn(sq, None, "interior")


def test_oracle_boundary_exponent_is_half(disk):
    fit = oracle_fit(disk, seed=3)
    assert 0.4 <= fit.alpha_hat <= 0.6
    assert fit.r2 >= 0.8
    assert fit.as_dict()["region"] == "boundary_S"


def test_free_field_interior_exponent(free, free_field):
    fit = fit_exponent(free_field, free, "interior", n_pairs=24)
    assert fit.alpha_hat >= 0.9
    assert fit.verdict == "ok"


def test_fit_argument_checks(free, free_field, disk, disk_field):
    with pytest.raises(PreconditionError):
        fit_exponent(free_field, free, "everywhere")
    with pytest.raises(PreconditionError):
        fit_exponent(free_field, free, "interior", separations=[0.01, 0.02, 0.1])
    with pytest.raises(PreconditionError):
        fit_exponent(sq, free, "interior")
    with pytest.raises(PreconditionError):
        fit_exponent(free_field, free, "boundary_S")


def test_exponent_map(free, free_field):
    with pytest.raises(PreconditionError):
        exponent_map(free_field, free, 0.05)
    with pytest.raises(UnsupportedError):
        exponent_map(sq, free, 0.1)
    cx, cy, alpha = exponent_map(free_field, free, 0.2, seed=1)
    assert alpha.shape == (len(cx), len(cy))
    known = np.isfinite(alpha)
    assert known.mean() > 0.8
    assert np.median(alpha[known]) == pytest.approx(1.0, abs=0.05)
    # low values sit only on the axis and diagonal rays through k0, where the
    # eight-neighbour fast marching error has a kink of relative size O(h)
    X, Y = np.meshgrid(cx, cy, indexing="ij")
    ray_dist = np.min([np.abs(X), np.abs(Y), np.abs(X - Y) / np.sqrt(2), np.abs(X + Y) / np.sqrt(2)], axis=0)
    low = known & (alpha < 0.9)
    assert np.all(ray_dist[low] <= 0.1)


def test_disk_map_has_half_band(disk, coarse_disk_field):
    cx, cy, alpha = exponent_map(coarse_disk_field, disk, 0.2, seed=1)
    X, Y = np.meshgrid(cx, cy, indexing="ij")
    r = np.hypot(X, Y)
    band = np.isfinite(alpha) & (r < 1.15) & (X < -0.3)
    far = np.isfinite(alpha) & (r > 2.0)
    assert band.sum() >= 8 and far.sum() >= 100
    assert np.median(alpha[band]) < 0.8
    assert np.median(alpha[far]) > 0.9


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 10.0))
def test_scaling_leaves_exponent_unchanged(c):
    anchors = [((0.0, 0.0), np.array([1.0, 0.0])), ((0.0, 0.5), np.array([-1.0, 0.0]))]

    def fn(P):
        return np.abs(np.asarray(P)[..., 0]) ** 1.5

    a = fit_exponent_fn(fn, None, "interior", anchors=anchors)
    b = fit_exponent_fn(lambda P: c * fn(P), None, "interior", anchors=anchors)
    assert b.alpha_hat == pytest.approx(a.alpha_hat, abs=1e-9)
    assert b.C_hat == pytest.approx(c * a.C_hat, rel=1e-9)
    assert sc_defect(lambda P: c * fn(P), (0.1, 0), (-0.2, 0), 0.3).defect == pytest.approx(
        c * sc_defect(fn, (0.1, 0), (-0.2, 0), 0.3).defect)


def test_defect_along_rays_from_k0(disk, disk_field):
    # in the visible region d is affine along rays through k0
    k0 = disk.k0
    for ang in (0.3, 1.0, -0.8, 2.0):
        e = np.array([np.cos(ang), np.sin(ang)])
        d = sc_defect(disk_field, k0 + 0.2 * e, k0 + 0.9 * e, 0.4)
        assert abs(d.defect) <= 2 * disk_field.h
