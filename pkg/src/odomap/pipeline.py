"""End-to-end mapping: odometry trace in, closed boundary polygon out."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .evaluation import EvaluationReport, evaluate_map
from .geometry import Pose
from .loop_closure import (
    LoopPairSet,
    OrientationProfile,
    build_orientation_profile,
    correlation_matrix,
    detect_loop_pairs,
)
from .mapping import MapEstimate, close_polygon, select_closing_pair
from .optimizer import OptimizationReport, lm_optimize
from .pose_graph import PoseGraph, add_loop_closures, build_graph
from .segmentation import DominantPointSet, poses_from_dominant_points, segment_path
from .sim import Environment, OdometryNoiseModel, OdometryTrace, simulate

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    """The mapping pipeline could not produce a map (e.g. no loop closures)."""


@dataclass
class MappingResult:
    dominant_points: DominantPointSet
    profile: OrientationProfile
    correlation: np.ndarray
    pairs: LoopPairSet
    initial_graph: PoseGraph
    graph: PoseGraph
    report: OptimizationReport
    estimate: MapEstimate


def build_map(trace, cfg: PipelineConfig | None = None) -> MappingResult:
    """Segment, detect loop closures, optimize and close the boundary polygon.

    ``trace`` is an :class:`OdometryTrace`, a list of poses, or an (n, 2)
    array of positions.
    """
    cfg = cfg or PipelineConfig()
    if isinstance(trace, OdometryTrace):
        trace = trace.poses
    heading = None
    if len(trace) and isinstance(trace[0], Pose):
        heading = np.unwrap([p.phi for p in trace])
        trace = np.array([[p.x, p.y] for p in trace])
    dp = segment_path(trace, cfg.segmentation)
    if len(dp) < 3:
        raise PipelineError(f"path reduces to {len(dp)} dominant points; nothing to map")
    poses = poses_from_dominant_points(dp)
    ref = None if heading is None else heading[dp.source_indices[:-1]]
    profile = build_orientation_profile(poses, ref)
    if not profile.comparable(cfg.correlation.l_nh).any():
        raise PipelineError(
            f"path of length {profile.total_length:.2f} m is too short for neighborhoods of "
            f"+-{cfg.correlation.l_nh} m; lower correlation.l_nh"
        )
    C = correlation_matrix(profile, cfg.correlation)
    pairs = detect_loop_pairs(C, profile, cfg.correlation)
    log.info("%d dominant points, %d loop pairs", len(dp), len(pairs))
    if not len(pairs):
        finite = C[np.isfinite(C) & ~np.eye(len(C), dtype=bool)]
        best = f"; smallest off-diagonal correlation error {finite.min():.3g}" if len(finite) else ""
        raise PipelineError(
            f"no loop closures below c_min={cfg.correlation.c_min}{best}; "
            "large odometry errors need a larger correlation.c_min"
        )
    g0 = build_graph(poses, cfg.noise, cfg.graph.eps_cov)
    g0 = add_loop_closures(g0, pairs, cfg.graph.gamma1, cfg.graph.gamma2, cfg.graph.eps_cov)
    g, report = lm_optimize(g0, cfg.lm)
    pair = select_closing_pair(g, pairs, profile, cfg.mapping.tau_turn, initial=g0)
    est = close_polygon(g, pair)
    return MappingResult(dp, profile, C, pairs, g0, g, report, est)


def run_simulation(env: Environment, cfg: PipelineConfig, seed: int | None = None,
                   noise: OdometryNoiseModel | None = None) -> OdometryTrace:
    sim = cfg.sim if seed is None else cfg.replace(**{"sim.seed": seed}).sim
    return simulate(env, sim, noise or cfg.noise)


def run_once(env: Environment, cfg: PipelineConfig, seed: int | None = None,
             noise: OdometryNoiseModel | None = None) -> tuple[MappingResult, EvaluationReport]:
    """Simulate, map and score one run against the environment's boundary."""
    trace = run_simulation(env, cfg, seed, noise)
    res = build_map(trace, cfg)
    return res, evaluate_map(res.estimate.polygon, env.boundary, cfg.alignment, cfg.correlation)


@dataclass
class SweepRow:
    alpha: float
    seed: int
    delta_a: float | None  # None when the run failed
    error: str = ""


def sweep(env: Environment, cfg: PipelineConfig, alphas, seeds) -> list[SweepRow]:
    """Run the pipeline for every (alpha, seed) cell; failures become empty cells."""
    rows = []
    for alpha in alphas:
        noise = OdometryNoiseModel.uniform(float(alpha))
        for seed in seeds:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    _, ev = run_once(env, cfg, int(seed), noise)
                rows.append(SweepRow(float(alpha), int(seed), ev.delta_a))
            except (PipelineError, RuntimeError, ValueError) as exc:
                log.warning("alpha=%g seed=%d failed: %s", alpha, seed, exc)
                rows.append(SweepRow(float(alpha), int(seed), None, str(exc).splitlines()[0]))
    return rows


def summarize(rows: list[SweepRow]) -> list[dict]:
    """Per-alpha mean and (population) standard deviation of the successful runs."""
    out = []
    for alpha in dict.fromkeys(r.alpha for r in rows):
        vals = np.array([r.delta_a for r in rows if r.alpha == alpha and r.delta_a is not None])
        n_all = sum(r.alpha == alpha for r in rows)
        out.append({
            "alpha": alpha,
            "runs": n_all,
            "succeeded": len(vals),
            "mean": float(vals.mean()) if len(vals) else math.nan,
            "std": float(vals.std()) if len(vals) else math.nan,
        })
    return out


def trace_from_poses(poses: list[Pose], rate: float = 20.0) -> OdometryTrace:
    return OdometryTrace(np.arange(len(poses)) / rate, list(poses))
