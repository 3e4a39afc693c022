import math

import numpy as np
import pytest
import shapely.geometry as sg
from hypothesis import given, settings
from hypothesis import strategies as st

from odomap.evaluation import (
    AlignmentConfig,
    MatchError,
    RigidTransform2D,
    align_horn,
    area_deviation,
    evaluate_map,
    match_boundary_points,
    write_evaluation_json,
)
from odomap.geometry import Polygon
from odomap.loop_closure import CorrelationConfig
from odomap.shapes import apartment, courtyard, l_shape

SQUARE = Polygon([[0, 0], [1, 0], [1, 1], [0, 1]])


def shapely_deviation(a: Polygon, b: Polygon) -> float:
    pa, pb = sg.Polygon(a.vertices), sg.Polygon(b.vertices)
    return 1.0 - pa.intersection(pb).area / pa.union(pb).area


def test_identical_and_disjoint():
    assert area_deviation(SQUARE, SQUARE) == pytest.approx(0.0, abs=1e-12)
    assert area_deviation(SQUARE, SQUARE.transformed(0, (5, 0))) == pytest.approx(1.0)


def test_shifted_square():
    assert area_deviation(SQUARE, SQUARE.transformed(0, (0.5, 0))) == pytest.approx(2 / 3, abs=1e-3)


def rect(x0, y0, w, h):
    return Polygon([[x0, y0], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h]])


def analytic_rect_deviation(a, b):
    (ax, ay, aw, ah), (bx, by, bw, bh) = a, b
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    return 1.0 - inter / (aw * ah + bw * bh - inter)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.1, 3.0), min_size=8, max_size=8))
def test_rectangles_against_analytic_overlap(v):
    a = (v[0] - 1.5, v[1] - 1.5, v[2], v[3])
    b = (v[4] - 1.5, v[5] - 1.5, v[6], v[7])
    assert abs(area_deviation(rect(*a), rect(*b)) - analytic_rect_deviation(a, b)) < 1e-3


@settings(max_examples=30, deadline=None)
@given(st.floats(-math.pi, math.pi), st.floats(-1, 1), st.floats(-1, 1))
def test_concave_polygons_against_shapely(angle, tx, ty):
    a = l_shape(2.0).boundary
    b = a.transformed(angle, (tx, ty))
    assert abs(area_deviation(a, b) - shapely_deviation(a, b)) < 1e-3


def test_rigid_transform_apply():
    T = RigidTransform2D(math.pi / 2, 1.0, 0.0)
    np.testing.assert_allclose(T.apply([[1.0, 0.0]]), [[1.0, 1.0]], atol=1e-12)
    assert RigidTransform2D(3 * math.pi).angle == pytest.approx(math.pi)


def test_horn_exact_and_identity():
    rng = np.random.default_rng(0)
    src = rng.normal(0, 3, (10, 2))
    T = RigidTransform2D(0.7, -2.0, 3.5)
    H = align_horn(list(zip(src, T.apply(src))))
    assert abs(H.angle - T.angle) < 1e-12
    assert abs(H.tx - T.tx) < 1e-12 and abs(H.ty - T.ty) < 1e-12
    I = align_horn(list(zip(src, src)))
    assert abs(I.angle) < 1e-12 and abs(I.tx) < 1e-12 and abs(I.ty) < 1e-12
    with pytest.raises(ValueError):
        align_horn([(src[0], src[0])])


def test_horn_noisy_against_grid_search():
    rng = np.random.default_rng(3)
    src = rng.uniform(-1, 1, (12, 2))
    T = RigidTransform2D(0.3, 0.2, -0.1)
    dst = T.apply(src) + rng.normal(0, 0.02, src.shape)
    H = align_horn(list(zip(src, dst)))

    def sse(a, tx, ty):
        return np.sum((RigidTransform2D(a, tx, ty).apply(src) - dst) ** 2)

    grid_a = np.arange(0.2, 0.4, 0.01)
    grid_t = np.arange(-0.3, 0.31, 0.01)
    best = min((sse(a, x, y), a, x, y) for a in grid_a for x in grid_t for y in grid_t)
    _, a, x, y = best
    assert abs(H.angle - a) <= 0.01 and abs(H.tx - x) <= 0.01 and abs(H.ty - y) <= 0.01
    assert sse(H.angle, H.tx, H.ty) <= best[0] + 1e-12


def test_match_identical_polygons():
    poly = apartment().boundary
    pairs = match_boundary_points(poly, poly)
    assert len(pairs) > 100
    for p, q in pairs:
        np.testing.assert_allclose(p, q, atol=1e-9)


def test_match_rotated_truth():
    poly = courtyard().boundary
    T = RigidTransform2D(math.pi / 2, 3.0, -1.0)
    pairs = match_boundary_points(poly, T.apply_polygon(poly))
    assert len(pairs) > 50
    for p, q in pairs:
        np.testing.assert_allclose(T.apply(p[None])[0], q, atol=1e-6)


def test_featureless_boundary_raises():
    t = np.linspace(0, 2 * math.pi, 200, endpoint=False)
    circle = Polygon(np.column_stack([10 * np.cos(t), 10 * np.sin(t)]))
    with pytest.raises(MatchError):
        match_boundary_points(circle, circle.transformed(0.4, (1, 1)))
    with pytest.warns(UserWarning, match="rotation search"):
        rep = evaluate_map(circle, circle.transformed(0.4, (1, 1)))
    assert rep.delta_a < 0.01


@pytest.mark.parametrize("shape", [l_shape(3.0), courtyard(40.0)])
def test_evaluate_transformed_truth(shape):
    truth = shape.boundary
    est = truth.transformed(-0.8, (2.0, -1.0))
    rep = evaluate_map(est, truth, corr=CorrelationConfig(l_nh=min(30.0, 0.25 * truth.perimeter())))
    assert rep.delta_a < 0.01
    assert rep.delta_a <= rep.horn_delta_a


def test_refined_never_worse_than_horn():
    truth = apartment().boundary
    rng = np.random.default_rng(5)
    est = Polygon(truth.vertices + rng.normal(0, 0.3, truth.vertices.shape)).transformed(0.5, (3, 4))
    rep = evaluate_map(est, truth)
    assert rep.delta_a <= rep.horn_delta_a
    assert rep.delta_a == pytest.approx(area_deviation(rep.transform.apply_polygon(est), truth), abs=1e-12)


def test_config_and_json(tmp_path):
    with pytest.raises(ValueError):
        AlignmentConfig(raster_resolution=0)
    rep = evaluate_map(SQUARE.transformed(0.1, (0.2, 0)), SQUARE, corr=CorrelationConfig(l_nh=1.0))
    write_evaluation_json(rep, tmp_path / "e.json")
    text = (tmp_path / "e.json").read_text()
    for key in ("delta_a", "rotation", "tx", "ty", "horn_delta_a", "iterations"):
        assert f'"{key}"' in text
