"""Loop closure detection by comparing the shape of orientation profiles.

Each vertex is described by the cumulative heading over a window of arclength
around it, shifted so that the vertex itself sits at the origin. Vertices on
different laps with matching window shapes become loop-closing pairs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, poses_to_array, wrap_angles


@dataclass(frozen=True)
class CorrelationConfig:
    l_nh: float = 30.0  # m, neighborhood half-length
    m: int = 100  # samples per neighborhood
    c_min: float = 1.0  # rad^2, acceptance threshold on the correlation error
    # rad; a pair's cumulative turn must be this close to a nonzero multiple of
    # 2*pi (None disables the gate)
    turn_gate: float | None = 1.0
    # relative deviation from the consensus lap length allowed for a pair
    # (None disables; needs the turn gate)
    lap_tolerance: float | None = 0.05

    def __post_init__(self):
        if not self.l_nh > 0:
            raise ValueError(f"l_nh must be > 0, got {self.l_nh}")
        if self.m < 2:
            raise ValueError(f"m must be >= 2, got {self.m}")
        if not self.c_min > 0:
            raise ValueError(f"c_min must be > 0, got {self.c_min}")
        if self.turn_gate is not None and not 0 < self.turn_gate < np.pi:
            raise ValueError(f"turn_gate must lie in (0, pi) or be None, got {self.turn_gate}")
        if self.lap_tolerance is not None and not self.lap_tolerance > 0:
            raise ValueError(f"lap_tolerance must be > 0 or None, got {self.lap_tolerance}")


@dataclass
class OrientationProfile:
    """Cumulative heading as a step function of travelled arclength.

    ``values[i]`` holds on ``[lengths[i], lengths[i+1])``; before 0 the first
    value and from ``lengths[-1]`` on the last value apply.
    """

    lengths: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.lengths = np.asarray(self.lengths, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.lengths.shape != self.values.shape or self.lengths.ndim != 1:
            raise ValueError("lengths and values must be 1-D arrays of equal length")
        if len(self.lengths) < 2:
            raise ValueError("a profile needs at least 2 vertices")
        if self.lengths[0] != 0.0 or np.any(np.diff(self.lengths) <= 0):
            raise ValueError("lengths must start at 0 and increase strictly")

    def __len__(self) -> int:
        return len(self.lengths)

    @property
    def total_length(self) -> float:
        return float(self.lengths[-1])

    def __call__(self, x) -> np.ndarray:
        idx = np.searchsorted(self.lengths, x, side="right") - 1
        return self.values[np.clip(idx, 0, len(self.values) - 1)]

    def comparable(self, l_nh: float) -> np.ndarray:
        """Vertices whose whole neighborhood window lies inside the profile."""
        return (self.lengths - l_nh >= 0.0) & (self.lengths + l_nh <= self.lengths[-1])


@dataclass
class LoopPairSet:
    pairs: list[tuple[int, int, float]] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for i, j, c in self.pairs:
            if i == j:
                raise ValueError(f"loop pair ({i}, {j}) joins a vertex to itself")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate loop pair {key}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


def build_orientation_profile(poses: list[Pose], reference=None) -> OrientationProfile:
    """Accumulate wrapped heading changes and segment lengths along ``poses``.

    ``reference`` optionally gives the robot's own unwrapped (cumulative)
    heading at each pose. Each heading is then placed on the 2*pi branch
    nearest to it instead of the branch nearest to the previous heading, so
    short segments driven backwards (odometry jitter while turning on the
    spot) cannot add spurious full turns.
    """
    if len(poses) < 2:
        raise ValueError("need at least 2 poses for an orientation profile")
    a = poses_to_array(poses)
    step = np.linalg.norm(np.diff(a[:, :2], axis=0), axis=1)
    lengths = np.concatenate([[0.0], np.cumsum(step)])
    if reference is None:
        values = a[0, 2] + np.concatenate([[0.0], np.cumsum(wrap_angles(np.diff(a[:, 2])))])
    else:
        ref = np.asarray(reference, dtype=float)
        if ref.shape != (len(a),):
            raise ValueError(f"reference must hold one heading per pose, got shape {ref.shape}")
        values = ref + wrap_angles(a[:, 2] - ref)
    return OrientationProfile(lengths, values)


def _offsets(cfg: CorrelationConfig) -> np.ndarray:
    return np.linspace(-cfg.l_nh, cfg.l_nh, cfg.m)


def neighborhood_vector(profile: OrientationProfile, i: int, cfg: CorrelationConfig) -> np.ndarray:
    """``m`` samples of the profile around vertex ``i``, grounded at that vertex.

    Raises ``ValueError`` when the window leaves the profile domain.
    """
    l_i = profile.lengths[i]
    if l_i - cfg.l_nh < 0.0 or l_i + cfg.l_nh > profile.total_length:
        raise ValueError(f"vertex {i}: neighborhood window exceeds the profile, not comparable")
    return profile(l_i + _offsets(cfg)) - profile.values[i]


def neighborhood_matrix(profile: OrientationProfile, cfg: CorrelationConfig, index=None) -> np.ndarray:
    """Stacked grounded neighborhoods for ``index`` (all vertices by default).

    No domain check; callers pick comparable vertices.
    """
    idx = np.arange(len(profile)) if index is None else np.asarray(index)
    x = profile.lengths[idx, None] + _offsets(cfg)[None, :]
    return profile(x) - profile.values[idx, None]


def pairwise_mean_square(a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Mean squared difference between every row of ``a`` and every row of ``b``.

    With ``b`` omitted the result is exactly symmetric with a zero diagonal.
    """
    if b is not None:
        out = np.empty((len(a), len(b)))
        for r in range(len(a)):
            out[r] = np.mean((b - a[r]) ** 2, axis=1)
        return out
    n = len(a)
    out = np.zeros((n, n))
    for r in range(n - 1):
        row = np.mean((a[r + 1 :] - a[r]) ** 2, axis=1)
        out[r, r + 1 :] = row
        out[r + 1 :, r] = row
    return out


def correlation_matrix(profile: OrientationProfile, cfg: CorrelationConfig) -> np.ndarray:
    """Correlation error between every pair of vertex neighborhoods.

    Entries involving a vertex whose window leaves the profile are ``inf``.
    """
    n = len(profile)
    ok = np.flatnonzero(profile.comparable(cfg.l_nh))
    C = np.full((n, n), np.inf)
    if len(ok):
        C[np.ix_(ok, ok)] = pairwise_mean_square(neighborhood_matrix(profile, cfg, ok))
    return C


# rad^2; correlation errors closer than this count as equal (rounding noise)
TIE_TOL = 1e-12

# neighbor offsets; (1, 1) and (-1, -1) shift both vertices along the path
_NEIGHBORS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def local_minima(C: np.ndarray) -> np.ndarray:
    """Boolean mask of 8-neighborhood local minima of ``C``.

    Out-of-range neighbors are ignored. A cell tied with a neighbor (within
    ``TIE_TOL``) survives only if it is lexicographically smaller, except for
    ties along the main diagonal direction, which mark distinct consistent
    matches and both stay.
    """
    n0, n1 = C.shape
    P = np.full((n0 + 2, n1 + 2), np.inf)
    P[1:-1, 1:-1] = C
    mask = np.isfinite(C)
    with np.errstate(invalid="ignore"):
        for di, dj in _NEIGHBORS:
            nb = P[1 + di : 1 + di + n0, 1 + dj : 1 + dj + n1]
            tie = np.abs(C - nb) <= TIE_TOL
            if di == dj or (di, dj) > (0, 0):
                mask &= (C < nb) | tie
            else:
                mask &= (C < nb) & ~tie
    return mask


def turn_consistent(profile: OrientationProfile, cfg: CorrelationConfig) -> np.ndarray:
    """Pairs whose cumulative heading change is a whole number of boundary turns.

    A true revisit of a boundary point accumulates +-2*pi per lap. Shapes with
    rotational symmetry match equally well at partial laps; those pairs are
    rejected here. All-True when the gate is disabled.
    """
    n = len(profile)
    if cfg.turn_gate is None:
        return np.ones((n, n), dtype=bool)
    d = profile.values[None, :] - profile.values[:, None]
    return (np.abs(wrap_angles(d)) <= cfg.turn_gate) & (np.abs(d) >= np.pi)


def detect_loop_pairs(C: np.ndarray, profile: OrientationProfile, cfg: CorrelationConfig) -> LoopPairSet:
    """Vertex pairs whose correlation error is a local minimum below ``c_min``.

    Only turn-consistent pairs take part in the local-minimum test. Pairs
    closer than ``l_nh`` in arclength are skipped afterwards: their windows
    overlap and match trivially.
    """
    C = np.asarray(C, dtype=float)
    C = np.where(turn_consistent(profile, cfg), C, np.inf)
    mask = local_minima(C) & (C < cfg.c_min)
    i, j = np.nonzero(np.triu(mask, k=1))
    l = profile.lengths
    keep = np.abs(l[j] - l[i]) >= cfg.l_nh
    i, j = i[keep], j[keep]
    if cfg.turn_gate is not None and cfg.lap_tolerance is not None and len(i):
        keep = lap_consistent(profile, i, j, cfg.lap_tolerance)
        i, j = i[keep], j[keep]
    return LoopPairSet([(int(a), int(b), float(C[a, b])) for a, b in zip(i, j)])


def shift_spread(profile: OrientationProfile, shift: float, step: float = 0.1) -> tuple[float, float]:
    """Mean and variance over x of ``theta(x + shift) - theta(x)``.

    At the true lap length the difference is one full turn plus slowly varying
    heading drift everywhere along the path; at the offset of a partial-lap
    look-alike it jumps whenever a corner enters or leaves the interval.
    """
    x = np.arange(0.0, profile.total_length - shift, step)
    if len(x) < 2:
        return math.nan, math.inf
    d = profile(x + shift) - profile(x)
    return float(d.mean()), float(d.var())


def lap_consistent(profile: OrientationProfile, i: np.ndarray, j: np.ndarray, tol: float) -> np.ndarray:
    """Mask of pairs whose arclength per boundary turn matches the lap length.

    Odometric path length drifts far less than heading, so genuine revisits
    share one lap length. The lap length is taken from the pair whose
    separation leaves the least varying heading difference along the whole
    path (see :func:`shift_spread`).
    """
    sep = profile.lengths[j] - profile.lengths[i]
    turns = np.maximum(np.rint(np.abs(profile.values[j] - profile.values[i]) / (2 * np.pi)), 1.0)
    per_lap = sep / turns
    spread = np.array([shift_spread(profile, s)[1] for s in sep])
    lap = float(per_lap[int(np.argmin(spread))])
    return np.abs(per_lap - lap) <= tol * lap


def write_matrix_csv(C: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in C:
            w.writerow(["inf" if np.isinf(v) else "%.9g" % v for v in row])
