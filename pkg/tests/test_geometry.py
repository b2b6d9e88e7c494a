import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridpark.geometry import (Pose2D, Transform3D, VehicleParams, compose, footprint_polygon,
                                 invert, normalize_angle, polygon_area, wrap_angles)

finite = st.floats(-1e3, 1e3, allow_nan=False)
angles = st.floats(-100.0, 100.0, allow_nan=False)


def random_transform(rng):
    q = rng.normal(size=4)
    return Transform3D.from_quaternion(q, rng.normal(size=3) * 5)


def test_normalize_examples():
    assert normalize_angle(0.0) == 0.0
    assert normalize_angle(3 * math.pi) == pytest.approx(math.pi)
    # oracle: strip whole turns one at a time
    a = -7.5 * math.pi
    while a <= -math.pi:
        a += 2 * math.pi
    while a > math.pi:
        a -= 2 * math.pi
    assert a == pytest.approx(0.5 * math.pi)
    assert normalize_angle(-7.5 * math.pi) == pytest.approx(a, abs=1e-12)


def test_normalize_range_ends():
    assert normalize_angle(math.pi) == pytest.approx(math.pi)
    assert normalize_angle(-math.pi) == pytest.approx(math.pi)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_normalize_rejects_non_finite(bad):
    with pytest.raises(ValueError):
        normalize_angle(bad)


@given(angles)
def test_normalize_idempotent_and_congruent(a):
    n = normalize_angle(a)
    assert -math.pi < n <= math.pi
    assert normalize_angle(n) == pytest.approx(n, abs=1e-12)
    k = (a - n) / (2 * math.pi)
    assert k == pytest.approx(round(k), abs=1e-9)


def test_wrap_angles_matches_scalar(rng):
    a = rng.uniform(-50, 50, 1000)
    w = wrap_angles(a)
    assert np.allclose(w, [normalize_angle(v) for v in a], atol=1e-12)


def test_pose_theta_normalised():
    assert Pose2D(0, 0, 5 * math.pi).theta == pytest.approx(math.pi)


@given(finite, finite, angles, finite, finite, angles)
def test_pose_compose_inverse(x1, y1, t1, x2, y2, t2):
    a, b = Pose2D(x1, y1, t1), Pose2D(x2, y2, t2)
    r = b.relative_to(a)
    back = a.compose(r)
    assert back.x == pytest.approx(b.x, abs=1e-7)
    assert back.y == pytest.approx(b.y, abs=1e-7)
    assert normalize_angle(back.theta - b.theta) == pytest.approx(0.0, abs=1e-9)


def test_transform_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        Transform3D(np.diag([1.0, 1.0, 2.0]), np.zeros(3))
    with pytest.raises(ValueError):
        Transform3D(np.diag([1.0, 1.0, -1.0]), np.zeros(3))  # reflection


def test_compose_identity_and_inverse(rng):
    t = random_transform(rng)
    ident = Transform3D.identity()
    assert compose(ident, t) == t
    c = compose(t, invert(t))
    assert np.allclose(c.rotation, np.eye(3), atol=1e-9)
    assert np.allclose(c.translation, 0.0, atol=1e-9)


def test_invert_examples():
    assert invert(Transform3D.identity()) == Transform3D.identity()
    t = Transform3D(np.eye(3), [1.0, 2.0, 3.0])
    assert np.allclose(invert(t).translation, [-1.0, -2.0, -3.0])


def test_compose_matches_sequential_application(rng):
    # oracle: apply b then a, point by point with explicit matrix-vector products
    for _ in range(20):
        a, b = random_transform(rng), random_transform(rng)
        pts = rng.normal(size=(100, 3)) * 10
        expected = np.array([a.rotation @ (b.rotation @ p + b.translation) + a.translation
                             for p in pts])
        assert np.max(np.abs(compose(a, b).apply(pts) - expected)) < 1e-9


def test_compose_associative(rng):
    for _ in range(20):
        a, b, c = (random_transform(rng) for _ in range(3))
        pts = rng.normal(size=(100, 3))
        left = compose(compose(a, b), c).apply(pts)
        right = compose(a, compose(b, c)).apply(pts)
        assert np.max(np.abs(left - right)) < 1e-9


def test_invert_round_trip_points(rng):
    for _ in range(20):
        t = random_transform(rng)
        pts = rng.normal(size=(100, 3)) * 10
        assert np.max(np.abs(invert(t).apply(t.apply(pts)) - pts)) < 1e-9


def test_vehicle_params(vehicle):
    assert vehicle.min_turn_radius == pytest.approx(2.5 / math.tan(0.6), abs=1e-12)
    assert vehicle.length == pytest.approx(4.1)
    v = VehicleParams.with_turn_radius(1.0)
    assert v.min_turn_radius == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        VehicleParams(max_steer=math.pi / 2)
    with pytest.raises(ValueError):
        VehicleParams(width=0.0)


def test_footprint_axis_aligned(vehicle):
    poly = footprint_polygon(Pose2D(0, 0, 0), vehicle)
    expected = {(-0.7, -0.9), (3.4, -0.9), (3.4, 0.9), (-0.7, 0.9)}
    assert {(round(x, 9), round(y, 9)) for x, y in poly} == expected
    assert polygon_area(poly) > 0  # counter-clockwise


def test_footprint_rotated_quarter_turn(vehicle):
    base = footprint_polygon(Pose2D(0, 0, 0), vehicle)
    rot = footprint_polygon(Pose2D(0, 0, math.pi / 2), vehicle)
    expected = np.column_stack([-base[:, 1], base[:, 0]])
    assert np.allclose(rot, expected, atol=1e-12)


def test_footprint_area_shoelace(rng, vehicle):
    for _ in range(100):
        p = Pose2D(*rng.uniform(-50, 50, 2), rng.uniform(-4, 4))
        assert polygon_area(footprint_polygon(p, vehicle)) == pytest.approx(
            vehicle.length * vehicle.width, abs=1e-9)


@settings(max_examples=50)
@given(finite, finite, angles, finite, finite, angles)
def test_footprint_equivariance(gx, gy, gt, px, py, pt):
    v = VehicleParams()
    g, p = Pose2D(gx, gy, gt), Pose2D(px, py, pt)
    moved = footprint_polygon(g.compose(p), v)
    expected = g.transform_points(footprint_polygon(p, v))
    assert np.allclose(moved, expected, atol=1e-8)
