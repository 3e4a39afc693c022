"""Boundary mapping from wheel odometry.

A robot drives a closed boundary several times; the repeated shape of its
heading profile reveals where it passes the same place again. Those loop
closures feed a pose graph whose optimized vertices form the map polygon.
"""

from .config import ConfigError, PipelineConfig, dump_config, load_config
from .evaluation import EvaluationReport, RigidTransform2D, area_deviation, evaluate_map
from .geometry import Polygon, Pose, wrap_angle
from .loop_closure import CorrelationConfig, build_orientation_profile, correlation_matrix, detect_loop_pairs
from .mapping import MapError, MapEstimate
from .optimizer import LmConfig, OptimizationError, lm_optimize
from .pipeline import MappingResult, PipelineError, build_map, run_once, sweep
from .pose_graph import PoseGraph, build_graph
from .segmentation import SegmentationConfig, segment_path
from .sim import DataError, Environment, OdometryNoiseModel, OdometryTrace, SimConfig, simulate

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "CorrelationConfig", "DataError", "Environment", "EvaluationReport", "LmConfig",
    "MapError", "MapEstimate", "MappingResult", "OdometryNoiseModel", "OdometryTrace", "OptimizationError",
    "PipelineConfig", "PipelineError", "Polygon", "Pose", "PoseGraph", "RigidTransform2D",
    "SegmentationConfig", "SimConfig", "area_deviation", "build_graph", "build_map",
    "build_orientation_profile", "correlation_matrix", "detect_loop_pairs", "dump_config",
    "evaluate_map", "lm_optimize", "load_config", "run_once", "segment_path", "simulate", "sweep",
    "wrap_angle",
]
