import math
import warnings

import numpy as np
import pytest

from odomap.config import PipelineConfig
from odomap.loop_closure import build_orientation_profile, correlation_matrix, detect_loop_pairs
from odomap.pipeline import PipelineError, SweepRow, build_map, run_simulation, summarize, trace_from_poses
from odomap.segmentation import poses_from_dominant_points, segment_path
from odomap.shapes import BUILTIN, apartment, courtyard
from odomap.sim import OdometryNoiseModel

from conftest import square


def test_builtin_shapes():
    for name, make in BUILTIN.items():
        env = make()
        assert env.boundary.is_simple(), name
    assert apartment().boundary.perimeter() == pytest.approx(100.0)
    assert courtyard().boundary.perimeter() == pytest.approx(106.79)


def test_noisy_runs_find_loop_pairs():
    cfg = PipelineConfig()
    found = 0
    for seed in range(10):
        trace = run_simulation(apartment(), cfg, seed)
        dp = segment_path(trace.positions(), cfg.segmentation)
        heading = np.unwrap([p.phi for p in trace.poses])
        prof = build_orientation_profile(poses_from_dominant_points(dp), heading[dp.source_indices[:-1]])
        pairs = detect_loop_pairs(correlation_matrix(prof, cfg.correlation), prof, cfg.correlation)
        found += len(pairs) >= 1
    assert found >= 9


def test_noisy_optimization_reduces_error():
    cfg = PipelineConfig()
    for seed in range(10):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = build_map(run_simulation(courtyard(), cfg, seed), cfg)
        assert res.report.final_error < res.report.initial_error


def test_input_forms_agree(noiseless_square_trace):
    cfg = PipelineConfig().replace(**{"correlation.l_nh": 10.0})
    a = build_map(noiseless_square_trace, cfg)
    b = build_map(noiseless_square_trace.poses, cfg)
    c = build_map(noiseless_square_trace.positions(), cfg)
    for r in (b, c):
        np.testing.assert_allclose(r.estimate.polygon.vertices, a.estimate.polygon.vertices, atol=1e-12)
    t = trace_from_poses(noiseless_square_trace.poses)
    assert len(t) == len(noiseless_square_trace)


def test_short_path_fails_cleanly():
    cfg = PipelineConfig()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        trace = run_simulation(square(2.0), cfg, 0, OdometryNoiseModel.uniform(0.0))
    with pytest.raises(PipelineError, match="l_nh"):
        build_map(trace, cfg)


def test_summarize():
    rows = [SweepRow(0.1, 0, 0.1), SweepRow(0.1, 1, 0.3), SweepRow(0.2, 0, None, "boom")]
    s = summarize(rows)
    assert s[0] == {"alpha": 0.1, "runs": 2, "succeeded": 2, "mean": pytest.approx(0.2), "std": pytest.approx(0.1)}
    assert s[1]["succeeded"] == 0 and math.isnan(s[1]["mean"])
