"""Closed polygon maps from an optimized pose graph."""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import TWO_PI, Polygon, poses_to_array, wrap_angles
from .loop_closure import LoopPairSet, OrientationProfile
from .pose_graph import PoseGraph
from .sim import Environment, environment_to_dict

log = logging.getLogger(__name__)

TAU_TURN = 0.35  # rad, tolerance on a full boundary turn
CLOSURE_WARN_DIST = 0.5  # m


class MapError(RuntimeError):
    pass


@dataclass
class MapEstimate:
    polygon: Polygon
    closing_pair: tuple[int, int]
    trimmed_prefix: int = 0
    trimmed_suffix: int = 0

    def to_environment(self, name: str = "map") -> Environment:
        # a self-intersecting estimate is still exportable
        env = Environment.__new__(Environment)
        env.boundary, env.name = self.polygon, name
        return env


def trim_prefix_suffix(g: PoseGraph) -> tuple[int, int]:
    """First and last vertex touched by any loop closure."""
    loops = g.loop_closures
    if not loops:
        raise MapError("graph has no loop closures; nothing to trim against")
    ids = [v for c in loops for v in (c.source, c.target)]
    return min(ids), max(ids)


def optimized_turning(g: PoseGraph, profile: OrientationProfile, initial: PoseGraph | None = None) -> np.ndarray:
    """Cumulative heading of the graph vertices after optimization.

    The profile's cumulative values are shifted by each vertex's (wrapped)
    heading correction, so the branch bookkeeping of the profile carries over.
    ``initial`` holds the headings the profile was built from; without it the
    profile values are taken to match ``g`` already.
    """
    if len(g.vertices) != len(profile):
        raise MapError(f"graph has {len(g.vertices)} vertices but the profile {len(profile)}")
    after = poses_to_array(g.vertices)[:, 2]
    before = after if initial is None else poses_to_array(initial.vertices)[:, 2]
    return profile.values + wrap_angles(after - before)


def select_closing_pair(g: PoseGraph, pairs: LoopPairSet, profile: OrientationProfile,
                        tau_turn: float = TAU_TURN, initial: PoseGraph | None = None) -> tuple[int, int]:
    """First loop pair (smallest ``i``) spanning one full turn of the boundary.

    A full turn is a cumulative heading change within ``tau_turn`` of 2*pi in
    either direction, measured on the optimized headings when ``initial``
    (the graph before optimization) is given. Without such a pair, falls back
    to the pair whose arclength separation is closest to the median
    separation, with a warning.
    """
    cand = sorted((min(i, j), max(i, j)) for i, j, _ in pairs)
    if not cand:
        raise MapError("no loop pairs to close the map with")
    phi = optimized_turning(g, profile, initial) if initial is not None else profile.values
    for i, j in cand:
        if abs(abs(phi[j] - phi[i]) - TWO_PI) <= tau_turn:
            return i, j
    sep = np.array([profile.lengths[j] - profile.lengths[i] for i, j in cand])
    k = int(np.argmin(np.abs(sep - np.median(sep))))
    warnings.warn(
        f"no loop pair spans a full turn (tolerance {tau_turn} rad); using pair {cand[k]} "
        "with the median arclength separation",
        stacklevel=2,
    )
    return cand[k]


def close_polygon(g: PoseGraph, pair: tuple[int, int]) -> MapEstimate:
    """Polygon through optimized vertices ``i .. j-1``; vertex ``j`` folds onto ``i``."""
    i, j = pair
    if not 0 <= i < j < len(g.vertices):
        raise MapError(f"closing pair {pair} must satisfy 0 <= i < j < {len(g.vertices)}")
    if j - i < 3:
        raise MapError(f"closing pair {pair} spans fewer than 3 vertices")
    X = poses_to_array(g.vertices)[:, :2]
    gap = float(np.linalg.norm(X[j] - X[i]))
    if gap > CLOSURE_WARN_DIST:
        warnings.warn(f"poor closure: vertices {i} and {j} are {gap:.3f} m apart after optimization", stacklevel=2)
    pts = _drop_repeats(X[i:j])
    try:
        poly = Polygon(pts)
    except ValueError as exc:
        raise MapError(f"closed trajectory is not a valid polygon: {exc}") from None
    if not poly.is_simple():
        warnings.warn("closed map polygon is self-intersecting", stacklevel=2)
    lo, hi = trim_prefix_suffix(g) if g.loop_closures else (0, len(g.vertices) - 1)
    return MapEstimate(poly, (i, j), trimmed_prefix=lo, trimmed_suffix=len(g.vertices) - 1 - hi)


def _drop_repeats(pts: np.ndarray, eps: float = 1e-9) -> np.ndarray:
    keep = [0]
    for k in range(1, len(pts)):
        if np.linalg.norm(pts[k] - pts[keep[-1]]) > eps:
            keep.append(k)
    if len(keep) > 1 and np.linalg.norm(pts[keep[-1]] - pts[keep[0]]) <= eps:
        keep.pop()
    return pts[keep]


def save_map(est: MapEstimate, path, name: str = "map") -> None:
    data = environment_to_dict(est.to_environment(name))
    data["closing_pair"] = list(est.closing_pair)
    data["trimmed_prefix"] = est.trimmed_prefix
    data["trimmed_suffix"] = est.trimmed_suffix
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


def total_turning(poly: Polygon) -> float:
    """Sum of exterior angles; +-2*pi for a simple polygon."""
    v = poly.vertices
    d = np.roll(v, -1, axis=0) - v
    h = np.arctan2(d[:, 1], d[:, 0])
    turn = np.diff(np.concatenate([h, h[:1]]))
    return float(np.sum((turn + math.pi) % TWO_PI - math.pi))
