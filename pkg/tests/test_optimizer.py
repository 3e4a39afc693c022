import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odomap.geometry import Pose, RelativeMeasurement, pose_diff, poses_to_array
from odomap.loop_closure import LoopPairSet
from odomap.optimizer import (
    LmConfig,
    lm_optimize,
    residual,
    stacked_jacobian,
    stacked_residual,
    total_error,
    write_report_json,
)
from odomap.pose_graph import LOOP_CLOSING, Constraint, PoseGraph, add_loop_closures, build_graph
from odomap.sim import OdometryNoiseModel


def random_graph(rng, n):
    poses = [Pose(*rng.uniform(-5, 5, 2), rng.uniform(-math.pi, math.pi)) for _ in range(n)]
    cons = []
    for k in range(n - 1):
        xi = RelativeMeasurement(*rng.normal(0, 1, 2), rng.uniform(-3, 3))
        cons.append(Constraint(k, k + 1, xi, tuple(rng.uniform(0.1, 2, 3))))
    for _ in range(rng.integers(0, 3)):
        i, j = rng.choice(n, 2, replace=False)
        cons.append(Constraint(int(i), int(j), RelativeMeasurement(0, 0, 0), tuple(rng.uniform(0.1, 2, 3)), LOOP_CLOSING))
    return PoseGraph(poses, cons)


def numeric_jacobian(g, h=1e-6):
    X = poses_to_array(g.vertices)
    J = np.empty((3 * len(g.constraints), X.size))
    for k in range(X.size):
        d = np.zeros(X.size)
        d[k] = h
        J[:, k] = (stacked_residual(g, X.ravel() + d) - stacked_residual(g, X.ravel() - d)) / (2 * h)
    return J


def jacobian_relative_error(g):
    Ja, Jn = stacked_jacobian(g), numeric_jacobian(g)
    return np.linalg.norm(Ja - Jn) / max(np.linalg.norm(Jn), 1e-12)


def test_residual_examples():
    c = Constraint(0, 1, RelativeMeasurement(0, 0, 0), (1, 1, 1))
    assert residual(Pose(0, 0, 0), Pose(1, 0, 0), c).tolist() == [1.0, 0.0, 0.0]
    exact = Constraint(0, 1, pose_diff(Pose(1, 2, 0.3), Pose(2, 1, -1.0)), (1, 1, 1))
    np.testing.assert_allclose(residual(Pose(1, 2, 0.3), Pose(2, 1, -1.0), exact), 0, atol=1e-12)
    # heading mismatch of a full turn is no mismatch
    turn = Constraint(0, 1, RelativeMeasurement(0, 0, 0), (1, 1, 1))
    assert residual(Pose(0, 0, 0), Pose(0, 0, 2 * math.pi), turn)[2] == pytest.approx(0.0, abs=1e-12)


def test_total_error_example():
    g = PoseGraph([Pose(0, 0, 0), Pose(1, 0, 0)], [Constraint(0, 1, RelativeMeasurement(0, 0, 0), (0.5, 1, 1))])
    assert total_error(g) == pytest.approx(2.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-math.pi, math.pi), st.floats(-10, 10), st.floats(-10, 10))
def test_total_error_rigid_invariance(seed, angle, tx, ty):
    g = random_graph(np.random.default_rng(seed), 6)
    c, s = math.cos(angle), math.sin(angle)
    moved = [Pose(c * p.x - s * p.y + tx, s * p.x + c * p.y + ty, p.phi + angle) for p in g.vertices]
    assert total_error(g.with_vertices(moved)) == pytest.approx(total_error(g), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, int(rng.integers(2, 11)))
    assert jacobian_relative_error(g) < 1e-4


def square_truth():
    # two laps over the corners of a 10 m square, plus edge midpoints
    pts = [(0, 0), (5, 0), (10, 0), (10, 5), (10, 10), (5, 10), (0, 10), (0, 5)]
    heads = [0, 0, math.pi / 2, math.pi / 2, math.pi, math.pi, -math.pi / 2, -math.pi / 2]
    return [Pose(x, y, h) for (x, y), h in list(zip(pts, heads)) * 2]


def exact_graph():
    truth = square_truth()
    g = build_graph(truth, OdometryNoiseModel())
    return truth, add_loop_closures(g, LoopPairSet([(k, k + 8, 0.01) for k in range(8)]))


def test_consistent_graph_is_fixed_point():
    truth, g = exact_graph()
    assert total_error(g) < 1e-20
    out, rep = lm_optimize(g)
    assert rep.converged
    np.testing.assert_allclose(poses_to_array(out.vertices), poses_to_array(truth), atol=1e-12)


def test_perturbed_vertex_recovery():
    truth, g = exact_graph()
    k = 5
    p = truth[k]
    start = list(truth)
    start[k] = Pose(p.x + 0.3, p.y - 0.2, p.phi + 0.1)
    out, rep = lm_optimize(g.with_vertices(start))
    assert rep.converged
    np.testing.assert_allclose(poses_to_array(out.vertices), poses_to_array(truth), atol=1e-6)
    assert rep.final_error < rep.initial_error


@pytest.mark.parametrize("seed", range(5))
def test_error_trace_strictly_decreases(seed):
    rng = np.random.default_rng(seed)
    truth, g = exact_graph()
    noisy = [Pose(p.x + rng.normal(0, 0.5), p.y + rng.normal(0, 0.5), p.phi + rng.normal(0, 0.1)) for p in truth]
    noisy[0] = truth[0]
    out, rep = lm_optimize(g.with_vertices(noisy))
    trace = np.array(rep.error_trace)
    assert np.all(np.diff(trace) < 0)
    assert rep.final_error == trace[-1] <= rep.initial_error
    # the anchor never moves
    assert out.vertices[0] == noisy[0]


def test_no_loop_closures_is_left_alone():
    g = build_graph([Pose(k, 0, 0) for k in range(4)], OdometryNoiseModel())
    out, rep = lm_optimize(g)
    assert out is g and rep.iterations == 0


def test_config_validation():
    with pytest.raises(ValueError):
        LmConfig(lambda_up=0.5)
    with pytest.raises(ValueError):
        LmConfig(max_iterations=0)


def test_report_json(tmp_path):
    _, g = exact_graph()
    _, rep = lm_optimize(g)
    write_report_json(rep, tmp_path / "r.json")
    text = (tmp_path / "r.json").read_text()
    assert '"converged": true' in text and "error_trace" in text
