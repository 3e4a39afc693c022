import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odomap.geometry import (
    Polygon,
    Pose,
    RelativeMeasurement,
    point_segment_distance,
    polygon_area,
    pose_apply,
    pose_diff,
    wrap_angle,
    wrap_angles,
)

angles = st.floats(-1e4, 1e4, allow_nan=False)
coords = st.floats(-100, 100, allow_nan=False)
poses = st.builds(Pose, coords, coords, st.floats(-math.pi, math.pi))


@pytest.mark.parametrize(
    "a, expected",
    [(0.0, 0.0), (math.pi + 0.1, -math.pi + 0.1), (-3 * math.pi, math.pi), (math.pi, math.pi), (-math.pi, math.pi)],
)
def test_wrap_angle_examples(a, expected):
    assert wrap_angle(a) == pytest.approx(expected, abs=1e-12)


@given(angles)
def test_wrap_range_and_idempotence(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert wrap_angle(w) == w
    # same direction
    assert math.cos(w) == pytest.approx(math.cos(a), abs=1e-9)
    assert math.sin(w) == pytest.approx(math.sin(a), abs=1e-9)


@given(st.lists(angles, min_size=1, max_size=20))
def test_wrap_angles_matches_scalar(a):
    np.testing.assert_allclose(wrap_angles(np.array(a)), [wrap_angle(v) for v in a], atol=1e-12)


def test_wrap_rejects_nan():
    with pytest.raises(ValueError):
        wrap_angle(float("nan"))


@pytest.mark.parametrize(
    "pi, pj, expected",
    [
        ((0, 0, 0), (1, 2, 0.5), (1, 2, 0.5)),
        ((0, 0, math.pi / 2), (0, 1, math.pi / 2), (1, 0, 0)),
        ((1, 1, math.pi), (0, 1, math.pi), (1, 0, 0)),
    ],
)
def test_pose_diff_examples(pi, pj, expected):
    np.testing.assert_allclose(pose_diff(Pose(*pi), Pose(*pj)).as_array(), expected, atol=1e-12)


@pytest.mark.parametrize(
    "p, xi, expected",
    [((0, 0, 0), (1, 0, 0), (1, 0, 0)), ((0, 0, math.pi / 2), (1, 0, 0), (0, 1, math.pi / 2))],
)
def test_pose_apply_examples(p, xi, expected):
    np.testing.assert_allclose(pose_apply(Pose(*p), RelativeMeasurement(*xi)).as_array(), expected, atol=1e-12)


@settings(max_examples=1000)
@given(poses, poses)
def test_pose_round_trip(p, q):
    r = pose_apply(p, pose_diff(p, q))
    assert r.x == pytest.approx(q.x, abs=1e-9)
    assert r.y == pytest.approx(q.y, abs=1e-9)
    assert abs(wrap_angle(r.phi - q.phi)) < 1e-9


def test_point_line_distance_examples():
    assert point_segment_distance((0.5, 0.1), (0, 0), (1, 0)) == pytest.approx(0.1)
    assert point_segment_distance((3.0, 0.0), (0, 0), (1, 0)) == 0.0
    # brute-force minimum over densely sampled points of the (extended) line
    t = np.linspace(-5, 5, 200001)
    brute = np.min(np.hypot(2 - t, 1 - 0 * t))
    assert point_segment_distance((2, 1), (0, 0), (1, 0)) == pytest.approx(brute, abs=1e-8)
    with pytest.raises(ValueError):
        point_segment_distance((1, 1), (0, 0), (0, 0))


def test_polygon_area_examples():
    sq = Polygon([[0, 0], [1, 0], [1, 1], [0, 1]])
    assert polygon_area(sq) == pytest.approx(1.0)
    assert polygon_area(Polygon([[0, 0], [1, 0], [0, 1]])) == pytest.approx(0.5)
    assert polygon_area(Polygon(sq.vertices[::-1])) == pytest.approx(1.0)


def test_polygon_validation():
    with pytest.raises(ValueError):
        Polygon([[0, 0], [1, 0]])
    with pytest.raises(ValueError):
        Polygon([[0, 0], [1, 0], [1, 0], [0, 1]])
    with pytest.raises(ValueError):
        Polygon([[0, 0], [1, 0], [0, 1], [0, 0]])


def test_self_intersection_warns():
    bowtie = Polygon([[0, 0], [1, 1], [1, 0], [0, 1]])
    assert not bowtie.is_simple()
    with pytest.warns(UserWarning):
        polygon_area(bowtie)


@given(st.floats(-math.pi, math.pi), coords, coords)
def test_area_invariant_under_rigid_motion(angle, tx, ty):
    poly = Polygon([[0, 0], [3, 0], [3, 1], [1, 1], [1, 2], [0, 2]])
    moved = poly.transformed(angle, (tx, ty))
    assert polygon_area(moved) == pytest.approx(polygon_area(poly), rel=1e-9)
    assert moved.perimeter() == pytest.approx(poly.perimeter(), rel=1e-9)
