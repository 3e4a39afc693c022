"""Pruning of odometry paths into straight-line dominant points."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose, points_line_distances


@dataclass(frozen=True)
class SegmentationConfig:
    l_min: float = 0.1  # m, minimum segment length before the fit test runs
    e_max: float = 0.001  # m, maximum mean distance of interior points to the chord

    def __post_init__(self):
        if not self.l_min > 0:
            raise ValueError(f"l_min must be > 0, got {self.l_min}")
        if not self.e_max > 0:
            raise ValueError(f"e_max must be > 0, got {self.e_max}")


@dataclass
class DominantPointSet:
    points: np.ndarray  # (k, 2)
    source_indices: np.ndarray  # (k,) index into the raw trace

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.source_indices = np.asarray(self.source_indices, dtype=int)
        if len(self.points) < 2:
            raise ValueError("a dominant point set needs at least 2 points")
        if len(self.points) != len(self.source_indices):
            raise ValueError("points and source_indices differ in length")

    def __len__(self) -> int:
        return len(self.points)


def line_fit_error(subset) -> float:
    """Mean perpendicular distance of the interior points to the first-to-last chord.

    Subsets with fewer than three points have no interior and score 0.
    """
    s = np.asarray(subset, dtype=float).reshape(-1, 2)
    if len(s) < 3:
        return 0.0
    return float(points_line_distances(s[1:-1], s[0], s[-1]).mean())


def segment_path(trace, cfg: SegmentationConfig | None = None, events: list | None = None) -> DominantPointSet:
    """Split a path into straight segments and return their end points.

    ``trace`` is an (n, 2) array of positions (or a list of poses). A point
    closer than ``l_min`` to the last dominant point always extends the
    current segment. Otherwise the segment is extended tentatively; if the
    mean interior distance to the new chord reaches ``e_max``, the previous
    point becomes a dominant point and a new segment starts there. The last
    trace point always closes the set.

    If ``events`` is a list, one ``(k, start, error, split)`` tuple is appended
    for every fit test, where the tested subset is ``trace[start:k+1]``.
    """
    cfg = cfg or SegmentationConfig()
    pts = _as_points(trace)
    n = len(pts)
    if n < 2:
        raise ValueError(f"need at least 2 points to segment, got {n}")

    dp = [0]
    start = 0  # index of S[0]; S is always the contiguous run pts[start:end+1]
    end = 0
    for k in range(1, n):
        x = pts[k]
        d = math.dist(pts[dp[-1]], x)
        if d < cfg.l_min:
            end = k
            continue
        e = _chord_error(pts, start, k)
        split = e >= cfg.e_max
        if events is not None:
            events.append((k, start, e, split))
        if not split:
            end = k
            continue
        # a split point on top of the last dominant point restarts S without emitting
        if not np.array_equal(pts[end], pts[dp[-1]]):
            dp.append(end)
        start, end = end, k
    if dp[-1] != n - 1:
        if np.array_equal(pts[dp[-1]], pts[n - 1]):
            dp[-1] = n - 1
        else:
            dp.append(n - 1)
    idx = np.array(dp)
    return DominantPointSet(pts[idx], idx)


def _chord_error(pts: np.ndarray, start: int, stop: int) -> float:
    """Mean distance of pts[start+1:stop] to the chord pts[start] -> pts[stop]."""
    if stop - start < 2:
        return 0.0
    return float(points_line_distances(pts[start + 1 : stop], pts[start], pts[stop]).mean())


def _as_points(trace) -> np.ndarray:
    if len(trace) and isinstance(trace[0], Pose):
        return np.array([[p.x, p.y] for p in trace], dtype=float)
    return np.asarray(trace, dtype=float).reshape(-1, 2)


def poses_from_dominant_points(dp: DominantPointSet) -> list[Pose]:
    """One pose per dominant point except the last, heading towards the next point."""
    pts = dp.points
    if len(pts) < 2:
        raise ValueError("need at least 2 dominant points")
    v = np.diff(pts, axis=0)
    heading = np.arctan2(v[:, 1], v[:, 0])
    return [Pose(p[0], p[1], h) for p, h in zip(pts[:-1], heading)]


def write_dominant_points_csv(dp: DominantPointSet, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "source_index"])
        for (x, y), i in zip(dp.points, dp.source_indices):
            w.writerow(["%.9g" % x, "%.9g" % y, int(i)])


def read_dominant_points_csv(path) -> DominantPointSet:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return DominantPointSet(
        [[float(r["x"]), float(r["y"])] for r in rows], [int(r["source_index"]) for r in rows]
    )
