"""Planar pose algebra and polygon primitives.

Angles live in (-pi, pi]; distances and areas are SI meters throughout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# Minimum separation of consecutive polygon vertices.
VERTEX_EPS = 1e-9


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]; pi itself is kept, -pi maps to pi."""
    if not math.isfinite(a):
        raise ValueError(f"cannot wrap non-finite angle {a!r}")
    if -math.pi < a <= math.pi:
        return float(a)
    r = math.pi - (math.pi - a) % TWO_PI
    # float modulo may land on the excluded endpoint
    if r <= -math.pi:
        r += TWO_PI
    return r


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Vectorised :func:`wrap_angle`."""
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("cannot wrap non-finite angles")
    r = math.pi - np.mod(math.pi - a, TWO_PI)
    r = np.where(r <= -math.pi, r + TWO_PI, r)
    return np.where((a > -math.pi) & (a <= math.pi), a, r)


def rot(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose:
    """Planar pose: position in meters, heading in radians."""

    x: float
    y: float
    phi: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "phi", wrap_angle(float(self.phi)))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.phi])

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "Pose":
        return cls(a[0], a[1], a[2])


@dataclass(frozen=True)
class RelativeMeasurement:
    """Displacement expressed in the source pose's frame."""

    dx: float
    dy: float
    dphi: float

    def __post_init__(self):
        object.__setattr__(self, "dx", float(self.dx))
        object.__setattr__(self, "dy", float(self.dy))
        object.__setattr__(self, "dphi", wrap_angle(float(self.dphi)))

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dphi])


def pose_diff(p_i: Pose, p_j: Pose) -> RelativeMeasurement:
    """Relative measurement of ``p_j`` seen from ``p_i``: ``p_j (-) p_i``."""
    c, s = math.cos(p_i.phi), math.sin(p_i.phi)
    dx, dy = p_j.x - p_i.x, p_j.y - p_i.y
    return RelativeMeasurement(c * dx + s * dy, -s * dx + c * dy, p_j.phi - p_i.phi)


def pose_apply(p_i: Pose, xi: RelativeMeasurement) -> Pose:
    """Compose ``p_i`` with a relative measurement; inverse of :func:`pose_diff`."""
    c, s = math.cos(p_i.phi), math.sin(p_i.phi)
    return Pose(
        p_i.x + c * xi.dx - s * xi.dy,
        p_i.y + s * xi.dx + c * xi.dy,
        p_i.phi + xi.dphi,
    )


def poses_to_array(poses: Iterable[Pose]) -> np.ndarray:
    return np.array([p.as_array() for p in poses], dtype=float).reshape(-1, 3)


def poses_from_array(a: np.ndarray) -> list[Pose]:
    return [Pose(*row) for row in np.asarray(a, dtype=float)]


def point_segment_distance(pt, a, b) -> float:
    """Perpendicular distance from ``pt`` to the infinite line through ``a`` and ``b``."""
    pt, a, b = (np.asarray(v, dtype=float) for v in (pt, a, b))
    v = b - a
    n = math.hypot(v[0], v[1])
    if n == 0.0:
        raise ValueError("degenerate segment: a == b")
    w = pt - a
    return abs(v[0] * w[1] - v[1] * w[0]) / n


def points_line_distances(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorised :func:`point_segment_distance` for an (n, 2) array."""
    v = b - a
    n = math.hypot(v[0], v[1])
    if n == 0.0:
        raise ValueError("degenerate segment: a == b")
    w = pts - a
    return np.abs(v[0] * w[:, 1] - v[1] * w[:, 0]) / n


def _segments_cross(p1, p2, q1, q2) -> np.ndarray:
    """Proper or touching intersection test, broadcast over segment arrays."""

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (
            c[..., 0] - a[..., 0]
        )

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    # bbox overlap rules out collinear-but-disjoint segments
    overlap = np.ones(np.broadcast(d1, d3).shape, dtype=bool)
    for k in (0, 1):
        lo_p = np.minimum(p1[..., k], p2[..., k])
        hi_p = np.maximum(p1[..., k], p2[..., k])
        lo_q = np.minimum(q1[..., k], q2[..., k])
        hi_q = np.maximum(q1[..., k], q2[..., k])
        overlap &= (lo_p <= hi_q) & (lo_q <= hi_p)
    return (d1 * d2 <= 0) & (d3 * d4 <= 0) & overlap


class Polygon:
    """Implicitly closed planar polygon.

    Raises ``ValueError`` for fewer than 3 vertices or repeated consecutive
    vertices (including last == first).
    """

    def __init__(self, vertices):
        v = np.array(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError(f"polygon vertices must be (n, 2), got shape {v.shape}")
        if len(v) < 3:
            raise ValueError(f"polygon needs at least 3 vertices, got {len(v)}")
        if not np.all(np.isfinite(v)):
            raise ValueError("polygon vertices must be finite")
        step = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)
        if np.any(step <= VERTEX_EPS):
            k = int(np.argmin(step))
            raise ValueError(f"consecutive polygon vertices {k} and {(k + 1) % len(v)} coincide")
        self.vertices = v
        self.vertices.setflags(write=False)

    def __len__(self) -> int:
        return len(self.vertices)

    def __repr__(self) -> str:
        return f"Polygon({len(self)} vertices, area={abs(self.signed_area()):.4g})"

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices, np.roll(self.vertices, -1, axis=0)

    def signed_area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    def perimeter(self) -> float:
        a, b = self.edges()
        return float(np.linalg.norm(b - a, axis=1).sum())

    def is_simple(self) -> bool:
        """True when no two non-adjacent edges touch or cross."""
        a, b = self.edges()
        n = len(a)
        hit = _segments_cross(a[:, None], b[:, None], a[None, :], b[None, :])
        i, j = np.triu_indices(n, k=2)
        adjacent = (i == 0) & (j == n - 1)
        return not bool(np.any(hit[i, j] & ~adjacent))

    def ccw(self) -> "Polygon":
        """Same polygon with counter-clockwise vertex order."""
        if self.signed_area() < 0:
            return Polygon(self.vertices[::-1])
        return self

    def transformed(self, angle: float, t) -> "Polygon":
        return Polygon(self.vertices @ rot(angle).T + np.asarray(t, dtype=float))


def polygon_area(poly: Polygon) -> float:
    """Absolute shoelace area. Self-intersecting input warns and returns |signed sum|."""
    if not poly.is_simple():
        warnings.warn("polygon is self-intersecting; area is the signed shoelace sum", stacklevel=2)
    return abs(poly.signed_area())
