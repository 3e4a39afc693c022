"""Pose graph assembly: odometric chain plus loop-closing constraints."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry import Pose, RelativeMeasurement, pose_diff, wrap_angle
from .loop_closure import LoopPairSet
from .sim import DataError, OdometryNoiseModel

EPS_COV = 1e-6

ODOMETRIC = "odometric"
LOOP_CLOSING = "loop_closing"


@dataclass(frozen=True)
class Constraint:
    source: int
    target: int
    xi_hat: RelativeMeasurement
    cov: tuple[float, float, float]  # diagonal: m^2, m^2, rad^2
    kind: str = ODOMETRIC

    def __post_init__(self):
        if self.source == self.target:
            raise ValueError(f"constraint joins vertex {self.source} to itself")
        if self.kind not in (ODOMETRIC, LOOP_CLOSING):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        cov = tuple(float(c) for c in self.cov)
        if len(cov) != 3 or min(cov) <= 0 or not all(math.isfinite(c) for c in cov):
            raise ValueError(f"covariance diagonal must be 3 positive finite values, got {self.cov}")
        object.__setattr__(self, "cov", cov)

    @property
    def information(self) -> np.ndarray:
        return 1.0 / np.asarray(self.cov)


@dataclass
class PoseGraph:
    vertices: list[Pose]
    constraints: list[Constraint] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.vertices)
        odo = [c for c in self.constraints if c.kind == ODOMETRIC]
        if [(c.source, c.target) for c in odo] != [(k, k + 1) for k in range(n - 1)]:
            raise ValueError("odometric constraints must chain vertex k to k+1 exactly once, in order")
        for c in self.constraints:
            if not (0 <= c.source < n and 0 <= c.target < n):
                raise ValueError(f"constraint {c.source}->{c.target} references a missing vertex")

    @property
    def odometric(self) -> list[Constraint]:
        return [c for c in self.constraints if c.kind == ODOMETRIC]

    @property
    def loop_closures(self) -> list[Constraint]:
        return [c for c in self.constraints if c.kind == LOOP_CLOSING]

    def with_vertices(self, vertices: list[Pose]) -> "PoseGraph":
        return replace(self, vertices=list(vertices))


def odometric_covariance(phi_i: float, d_trans: float, d_rot: float, noise: OdometryNoiseModel,
                         eps_cov: float = EPS_COV) -> tuple[float, float, float]:
    """Diagonal odometric covariance for one translation and one rotation.

    The cos/sin factors are taken in absolute value and every entry is floored
    at ``eps_cov`` so the information matrix exists.
    """
    a1, a2, a3, a4 = noise.alphas
    lin = a3 * d_trans + a4 * d_rot
    return (
        max(abs(math.cos(phi_i)) * lin, eps_cov),
        max(abs(math.sin(phi_i)) * lin, eps_cov),
        max(a1 * d_rot + a2 * d_trans, eps_cov),
    )


def build_graph(poses: list[Pose], noise: OdometryNoiseModel, eps_cov: float = EPS_COV) -> PoseGraph:
    if len(poses) < 2:
        raise ValueError("need at least 2 poses to build a pose graph")
    cons = []
    for k, (p, q) in enumerate(zip(poses[:-1], poses[1:])):
        d_trans = math.hypot(q.x - p.x, q.y - p.y)
        d_rot = abs(wrap_angle(q.phi - p.phi))
        cov = odometric_covariance(p.phi, d_trans, d_rot, noise, eps_cov)
        cons.append(Constraint(k, k + 1, pose_diff(p, q), cov, ODOMETRIC))
    return PoseGraph(list(poses), cons)


def add_loop_closures(g: PoseGraph, pairs: LoopPairSet, gamma1: float = 1.0, gamma2: float = 1.0,
                      eps_cov: float = EPS_COV) -> PoseGraph:
    """Return a new graph with a zero-measurement constraint per loop pair.

    Covariance is ``diag(gamma1, gamma1, gamma2) * C_ij``, floored at ``eps_cov``.
    """
    existing = {(min(c.source, c.target), max(c.source, c.target)) for c in g.loop_closures}
    added = []
    zero = RelativeMeasurement(0.0, 0.0, 0.0)
    n = len(g.vertices)
    for i, j, c in pairs:
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"loop pair ({i}, {j}) references a missing vertex")
        key = (min(i, j), max(i, j))
        if key in existing:
            raise ValueError(f"duplicate loop pair {key}")
        existing.add(key)
        cov = (max(gamma1 * c, eps_cov), max(gamma1 * c, eps_cov), max(gamma2 * c, eps_cov))
        added.append(Constraint(int(i), int(j), zero, cov, LOOP_CLOSING))
    return PoseGraph(list(g.vertices), list(g.constraints) + added)


def incidence_matrix(g: PoseGraph) -> np.ndarray:
    """Vertices x edges matrix: -1 at each edge's source, +1 at its target.

    Odometric columns come first in chain order, loop closures after them.
    """
    edges = g.odometric + g.loop_closures
    A = np.zeros((len(g.vertices), len(edges)))
    for col, c in enumerate(edges):
        A[c.source, col] = -1.0
        A[c.target, col] = 1.0
    return A


# -- text format ------------------------------------------------------------


def write_graph(g: PoseGraph, path) -> None:
    lines = [f"VERTEX {k} {p.x:.17g} {p.y:.17g} {p.phi:.17g}" for k, p in enumerate(g.vertices)]
    for c in g.constraints:
        xi = c.xi_hat
        lines.append(
            f"EDGE {c.source} {c.target} {xi.dx:.17g} {xi.dy:.17g} {xi.dphi:.17g} "
            f"{c.cov[0]:.17g} {c.cov[1]:.17g} {c.cov[2]:.17g} {c.kind}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path) -> PoseGraph:
    vertices: dict[int, Pose] = {}
    cons = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "VERTEX" and len(parts) == 5:
                vertices[int(parts[1])] = Pose(*map(float, parts[2:5]))
            elif parts[0] == "EDGE" and len(parts) == 10:
                v = list(map(float, parts[3:9]))
                cons.append(
                    Constraint(int(parts[1]), int(parts[2]), RelativeMeasurement(*v[:3]), tuple(v[3:]), parts[9])
                )
            else:
                raise DataError(f"{path}:{lineno}: unrecognised line {line!r}")
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    if sorted(vertices) != list(range(len(vertices))):
        raise DataError(f"{path}: vertex ids must be 0..N without gaps")
    odo = sorted((c for c in cons if c.kind == ODOMETRIC), key=lambda c: c.source)
    loops = [c for c in cons if c.kind == LOOP_CLOSING]
    return PoseGraph([vertices[k] for k in range(len(vertices))], odo + loops)
