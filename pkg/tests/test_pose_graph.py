import math

import numpy as np
import pytest

from odomap.geometry import Pose, RelativeMeasurement
from odomap.loop_closure import LoopPairSet
from odomap.pose_graph import (
    EPS_COV,
    Constraint,
    PoseGraph,
    add_loop_closures,
    build_graph,
    incidence_matrix,
    odometric_covariance,
    read_graph,
    write_graph,
)
from odomap.sim import DataError, OdometryNoiseModel

TABLE = OdometryNoiseModel()


def test_covariance_along_x():
    cov = odometric_covariance(0.0, 1.0, 0.0, TABLE)
    np.testing.assert_allclose(cov, (0.0316, EPS_COV, 0.0412), rtol=1e-12)


def test_covariance_along_y():
    cov = odometric_covariance(math.pi / 2, 1.0, 0.0, TABLE)
    assert cov[0] == EPS_COV
    assert cov[1] == pytest.approx(0.0316)


def test_covariance_includes_rotation_terms():
    # alpha3 * dT + alpha4 * dR on position, alpha1 * dR + alpha2 * dT on heading
    cov = odometric_covariance(0.0, 2.0, 0.5, TABLE)
    assert cov[0] == pytest.approx(0.0316 * 2 + 0.0173 * 0.5)
    assert cov[2] == pytest.approx(0.0849 * 0.5 + 0.0412 * 2)


def test_two_pose_graph():
    g = build_graph([Pose(0, 0, 0), Pose(1, 0, 0)], TABLE)
    assert len(g.vertices) == 2 and len(g.odometric) == 1 and not g.loop_closures
    assert g.odometric[0].xi_hat.as_array().tolist() == [1.0, 0.0, 0.0]


def test_loop_closure_covariance():
    g = build_graph([Pose(k, 0, 0) for k in range(4)], TABLE)
    g2 = add_loop_closures(g, LoopPairSet([(0, 3, 0.1)]))
    (c,) = g2.loop_closures
    assert c.cov == pytest.approx((0.1, 0.1, 0.1))
    assert c.xi_hat.as_array().tolist() == [0.0, 0.0, 0.0]
    (z,) = add_loop_closures(g, LoopPairSet([(0, 3, 0.0)])).loop_closures
    assert z.cov == (EPS_COV,) * 3
    assert add_loop_closures(g, LoopPairSet([]), 2.0, 3.0).constraints == g.constraints
    (s,) = add_loop_closures(g, LoopPairSet([(1, 3, 0.1)]), gamma1=2.0, gamma2=3.0).loop_closures
    assert s.cov == pytest.approx((0.2, 0.2, 0.3))


def test_incidence_matrix_five_vertices():
    g = build_graph([Pose(k, 0, 0) for k in range(5)], TABLE)
    g = add_loop_closures(g, LoopPairSet([(0, 4, 0.2)]))
    expected = np.array([
        [-1, 0, 0, 0, -1],
        [1, -1, 0, 0, 0],
        [0, 1, -1, 0, 0],
        [0, 0, 1, -1, 0],
        [0, 0, 0, 1, 1],
    ])
    A = incidence_matrix(g)
    assert np.array_equal(A, expected)
    assert np.all(A.sum(axis=0) == 0)


def test_incidence_matrix_chain():
    A = incidence_matrix(build_graph([Pose(k, 0, 0) for k in range(3)], TABLE))
    assert np.array_equal(A, [[-1, 0], [1, -1], [0, 1]])


def test_graph_validation():
    with pytest.raises(ValueError):
        Constraint(1, 1, RelativeMeasurement(0, 0, 0), (1, 1, 1))
    with pytest.raises(ValueError):
        Constraint(0, 1, RelativeMeasurement(0, 0, 0), (1, 0, 1))
    with pytest.raises(ValueError):
        PoseGraph([Pose(0, 0, 0), Pose(1, 0, 0)], [])
    g = build_graph([Pose(k, 0, 0) for k in range(3)], TABLE)
    with pytest.raises(ValueError):
        add_loop_closures(g, LoopPairSet([(0, 7, 0.1)]))


def test_graph_text_round_trip(tmp_path):
    g = build_graph([Pose(k, 0.1 * k, 0.2 * k) for k in range(5)], TABLE)
    g = add_loop_closures(g, LoopPairSet([(0, 4, 0.3)]))
    write_graph(g, tmp_path / "g.txt")
    back = read_graph(tmp_path / "g.txt")
    assert back.vertices == g.vertices
    assert back.constraints == g.constraints
    (tmp_path / "bad.txt").write_text("VERTEX 0 0 0 0\nVERTEX 1 1 0\n")
    with pytest.raises(DataError, match=":2"):
        read_graph(tmp_path / "bad.txt")
