import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridpark.geometry import Pose2D, normalize_angle
from hybridpark.reeds_shepp import (ADMISSIBLE_WORDS, Gear, RSPath, RSSegment, Steer,
                                    enumerate_all, sample, sample_array, shortest_length,
                                    solve, sort_by_preference)

from conftest import random_pose

ORIGIN = Pose2D(0.0, 0.0, 0.0)


def integrate(path, start, r_min, h=0.005):
    """RK4 integration of the unicycle ODE along each segment."""
    s = np.array([start.x, start.y, start.theta])
    for seg in path.segments:
        kappa = seg.steer.sign / r_min
        v = seg.gear.value
        n = max(1, int(math.ceil(seg.length / h)))
        dt = seg.length / n

        def f(q):
            return np.array([v * math.cos(q[2]), v * math.sin(q[2]), v * kappa])

        for _ in range(n):
            k1 = f(s)
            k2 = f(s + 0.5 * dt * k1)
            k3 = f(s + 0.5 * dt * k2)
            k4 = f(s + dt * k3)
            s = s + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return s


def pose_error(x, y, th, goal):
    return math.hypot(x - goal.x, y - goal.y), abs(normalize_angle(th - goal.theta))


def test_words_are_48():
    assert len(ADMISSIBLE_WORDS) == 48


def test_start_equals_goal():
    p = Pose2D(1.0, -2.0, 0.7)
    paths = enumerate_all(p, p, 1.0)
    assert any(q.total_length < 1e-9 for q in paths)
    assert solve(p, p, 1.0).total_length < 1e-9


def test_straight_forward():
    paths = enumerate_all(ORIGIN, Pose2D(4, 0, 0), 1.0)
    assert any(p.total_length == pytest.approx(4.0, abs=1e-9)
               and all(s.steer is Steer.STRAIGHT or s.length < 1e-9 for s in p.segments)
               for p in paths)
    best = solve(ORIGIN, Pose2D(4, 0, 0), 1.0)
    assert best.total_length == pytest.approx(4.0, abs=1e-9)
    moving = [s for s in best.segments if s.length > 1e-9]
    assert [(s.steer, s.gear) for s in moving] == [(Steer.STRAIGHT, Gear.FORWARD)]
    assert best.gear_shifts == 0


def test_straight_backward():
    best = solve(ORIGIN, Pose2D(-3, 0, 0), 1.0)
    assert best.total_length == pytest.approx(3.0, abs=1e-9)
    moving = [s for s in best.segments if s.length > 1e-9]
    assert [(s.steer, s.gear) for s in moving] == [(Steer.STRAIGHT, Gear.BACKWARD)]


def test_rejects_bad_radius():
    with pytest.raises(ValueError):
        enumerate_all(ORIGIN, Pose2D(1, 0, 0), 0.0)


def test_enumerate_endpoints_forward_integration(rng):
    worst = 0.0
    for _ in range(1000):
        a, b = random_pose(rng), random_pose(rng)
        for p in enumerate_all(a, b, 1.0):
            assert p.word in ADMISSIBLE_WORDS
            end = p.end_pose(a, 1.0)
            worst = max(worst, *pose_error(end.x, end.y, end.theta, b))
    assert worst < 1e-6


def test_enumerate_endpoints_rk4_oracle(rng):
    for _ in range(30):
        a, b = random_pose(rng), random_pose(rng)
        for p in enumerate_all(a, b, 1.0)[:6]:
            x, y, th = integrate(p, a, 1.0)
            d, e = pose_error(x, y, th, b)
            assert d < 1e-6 and e < 1e-6


def test_solve_is_min_of_enumeration(rng):
    for _ in range(1000):
        a, b = random_pose(rng), random_pose(rng)
        paths = enumerate_all(a, b, 1.0)
        best = solve(a, b, 1.0)
        assert abs(best.total_length - min(p.total_length for p in paths)) < 1e-9
        assert shortest_length(a, b, 1.0) == pytest.approx(best.total_length, abs=1e-9)


def test_tie_break_prefers_fewer_shifts():
    seg = RSSegment
    one = RSPath((seg(Steer.LEFT, Gear.FORWARD, 1.0), seg(Steer.RIGHT, Gear.BACKWARD, 1.0),
                  seg(Steer.LEFT, Gear.FORWARD, 1.0)), "L+R-L+")
    two = RSPath((seg(Steer.LEFT, Gear.FORWARD, 1.0), seg(Steer.RIGHT, Gear.FORWARD, 1.0),
                  seg(Steer.LEFT, Gear.BACKWARD, 1.0)), "L+R+L-")
    assert one.gear_shifts == 2 and two.gear_shifts == 1
    assert sort_by_preference([one, two])[0] is two


def test_gear_shift_skips_zero_segments():
    seg = RSSegment
    p = RSPath((seg(Steer.LEFT, Gear.FORWARD, 1.0), seg(Steer.STRAIGHT, Gear.BACKWARD, 0.0),
                seg(Steer.LEFT, Gear.FORWARD, 1.0)), "L+S-L+")
    assert p.gear_shifts == 0
    assert p.total_length == 2.0


def test_sample_straight():
    p = RSPath((RSSegment(Steer.STRAIGHT, Gear.FORWARD, 1.0),), "S+")
    poses = sample(p, ORIGIN, 1.0, 0.5)
    assert [(round(q.x, 12), round(q.y, 12)) for q in poses] == [(0, 0), (0.5, 0), (1.0, 0)]


def test_sample_half_circle():
    p = RSPath((RSSegment(Steer.LEFT, Gear.FORWARD, math.pi),), "L+")
    last = sample(p, ORIGIN, 1.0, 0.1)[-1]
    assert last.x == pytest.approx(0.0, abs=1e-6)
    assert last.y == pytest.approx(2.0, abs=1e-6)
    assert abs(normalize_angle(last.theta - math.pi)) < 1e-6


def test_sample_rejects_bad_step():
    with pytest.raises(ValueError):
        sample(solve(ORIGIN, Pose2D(1, 1, 1), 1.0), ORIGIN, 1.0, 0.0)


def test_sample_spacing_and_tangents(rng):
    ds = 0.1
    for _ in range(100):
        a, b = random_pose(rng), random_pose(rng)
        path = solve(a, b, 1.0)
        arr = sample_array(path, a, 1.0, ds)
        assert np.allclose(arr[0], [a.x, a.y, a.theta])
        d, e = pose_error(*arr[-1], b)
        assert d < 1e-6 and e < 1e-6
        steps = np.hypot(np.diff(arr[:, 0]), np.diff(arr[:, 1]))
        assert steps.max() <= ds + 1e-9
        # closed-form arc oracle: each chord points along the mean heading of its ends,
        # flipped when reversing
        gears = []
        for seg in path.segments:
            if seg.length > 0:
                n = max(1, math.ceil(seg.length / ds - 1e-9))
                gears += [seg.gear.value] * n
        for k, g in enumerate(gears):
            if steps[k] < 1e-9:
                continue
            th0, th1 = arr[k, 2], arr[k + 1, 2]
            mid = th0 + 0.5 * normalize_angle(th1 - th0)
            chord = math.atan2(arr[k + 1, 1] - arr[k, 1], arr[k + 1, 0] - arr[k, 0])
            expect = mid if g > 0 else mid + math.pi
            assert abs(normalize_angle(chord - expect)) < 1e-6


pose_st = st.tuples(st.floats(-10, 10), st.floats(-10, 10), st.floats(-math.pi, math.pi))


@settings(max_examples=200)
@given(pose_st, pose_st)
def test_time_flip_symmetry(a, b):
    a, b = Pose2D(*a), Pose2D(*b)
    assert solve(a, b, 1.0).total_length == pytest.approx(solve(b, a, 1.0).total_length,
                                                          abs=1e-9)


@settings(max_examples=200)
@given(pose_st, pose_st, st.floats(0.2, 5.0))
def test_scale_equivariance(a, b, k):
    pa, pb = Pose2D(*a), Pose2D(*b)
    base = solve(pa, pb, 1.0).total_length
    scaled = solve(Pose2D(k * pa.x, k * pa.y, pa.theta), Pose2D(k * pb.x, k * pb.y, pb.theta), k)
    assert scaled.total_length == pytest.approx(k * base, abs=1e-9 * max(1.0, k * base))


@settings(max_examples=200)
@given(pose_st, pose_st, st.floats(0.5, 4.0))
def test_endpoint_exactness(a, b, r):
    a, b = Pose2D(*a), Pose2D(*b)
    arr = sample_array(solve(a, b, r), a, r, 0.25)
    d, e = pose_error(*arr[-1], b)
    assert d < 1e-6 and e < 1e-6
