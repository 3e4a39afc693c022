"""Boundary-following robot simulator with odometry noise.

The robot drives the boundary polygon at constant speed, turning in place at
each corner, and its wheel odometry is corrupted with the rotation/translation
noise model parameterised by ``alpha1..alpha4``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Polygon, Pose, poses_from_array, poses_to_array, wrap_angle, wrap_angles

log = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy.random.PCG64"

TRACE_HEADER = ["t", "x", "y", "phi", "true_x", "true_y", "true_phi"]


class DataError(ValueError):
    """Malformed input file (bad JSON, CSV row, or geometry)."""


@dataclass
class Environment:
    boundary: Polygon
    name: str = "environment"

    def __post_init__(self):
        if not isinstance(self.boundary, Polygon):
            self.boundary = Polygon(self.boundary)
        if not self.boundary.is_simple():
            raise ValueError(f"environment {self.name!r}: boundary polygon is self-intersecting")


@dataclass(frozen=True)
class OdometryNoiseModel:
    """Odometry noise coefficients.

    ``alpha1``: rotation noise from rotation, ``alpha2``: rotation noise from
    translation, ``alpha3``: translation noise from translation, ``alpha4``:
    translation noise from rotation.
    """

    alpha1: float = 0.0849
    alpha2: float = 0.0412
    alpha3: float = 0.0316
    alpha4: float = 0.0173

    def __post_init__(self):
        for k, v in zip(("alpha1", "alpha2", "alpha3", "alpha4"), self.alphas):
            if not (v >= 0.0 and math.isfinite(v)):
                raise ValueError(f"{k} must be a finite value >= 0, got {v}")

    @property
    def alphas(self) -> tuple[float, float, float, float]:
        return (self.alpha1, self.alpha2, self.alpha3, self.alpha4)

    @classmethod
    def uniform(cls, alpha: float) -> "OdometryNoiseModel":
        return cls(alpha, alpha, alpha, alpha)


@dataclass(frozen=True)
class SimConfig:
    """Driving parameters.

    ``turn_rate`` (rad/s) spreads each corner rotation over several in-place
    samples; ``None`` turns each corner in a single sample.
    """

    speed: float = 0.3
    sample_rate: float = 20.0
    laps: int = 2
    seed: int = 0
    turn_rate: float | None = 0.5

    def __post_init__(self):
        if not self.speed > 0:
            raise ValueError(f"speed must be > 0, got {self.speed}")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be > 0, got {self.sample_rate}")
        if self.laps < 1:
            raise ValueError(f"laps must be >= 1, got {self.laps}")
        if self.laps < 2:
            log.warning("laps=%d: loop closure needs the boundary to be driven at least twice", self.laps)
        if self.turn_rate is not None and not self.turn_rate > 0:
            raise ValueError(f"turn_rate must be > 0 or None, got {self.turn_rate}")

    @property
    def step(self) -> float:
        return self.speed / self.sample_rate


@dataclass
class OdometryTrace:
    timestamps: np.ndarray
    poses: list[Pose]
    true_poses: list[Pose] | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        if len(self.timestamps) != len(self.poses):
            raise ValueError("timestamps and poses differ in length")
        if self.true_poses is not None and len(self.true_poses) != len(self.poses):
            raise ValueError("true_poses and poses differ in length")
        if np.any(np.diff(self.timestamps) <= 0):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.poses)

    def positions(self) -> np.ndarray:
        return poses_to_array(self.poses)[:, :2]


def _lap(boundary: Polygon, step: float, turn_step: float | None) -> list[tuple[float, float, float]]:
    v = boundary.vertices
    n = len(v)
    d = np.roll(v, -1, axis=0) - v
    lengths = np.linalg.norm(d, axis=1)
    if lengths.min() < 3 * step:
        raise ValueError(
            f"edge of length {lengths.min():.4g} m is shorter than three sample steps ({3 * step:.4g} m)"
        )
    heading = np.arctan2(d[:, 1], d[:, 0])
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    perimeter = cum[-1]

    count = int(math.floor(perimeter / step)) + 1
    if (count - 1) * step >= perimeter:
        count -= 1
    s = np.arange(count) * step
    edge = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, n - 1)
    pos = v[edge] + (s - cum[edge])[:, None] * (d[edge] / lengths[edge, None])
    samples = [(float(p[0]), float(p[1]), float(heading[e])) for p, e in zip(pos, edge)]

    # corner e sits at arclength cum[e]; snap the last sample before it onto the
    # vertex (arriving heading) and the next one onto the vertex (leaving heading)
    out: list[tuple[float, float, float]] = []
    corner_at = {}
    for e in range(1, n):
        k = int(math.floor(cum[e] / step))
        while k * step > cum[e]:
            k -= 1
        while (k + 1) * step <= cum[e]:
            k += 1
        corner_at[k] = e
    skip = set()
    for k in range(count):
        if k in skip:
            continue
        if k in corner_at:
            e = corner_at[k]
            vx, vy = float(v[e, 0]), float(v[e, 1])
            out.append((vx, vy, float(heading[e - 1])))
            out.extend((vx, vy, h) for h in _turn(heading[e - 1], heading[e], turn_step))
            out.append((vx, vy, float(heading[e])))
            skip.add(k + 1)
        elif k == count - 1:
            # arrive back at vertex 0 and turn in place towards the first edge
            out.append((float(v[0, 0]), float(v[0, 1]), float(heading[n - 1])))
            out.extend((float(v[0, 0]), float(v[0, 1]), h) for h in _turn(heading[n - 1], heading[0], turn_step))
        else:
            out.append(samples[k])
    return out


def _turn(h0: float, h1: float, turn_step: float | None) -> list[float]:
    """Intermediate in-place headings strictly between h0 and h1."""
    if turn_step is None:
        return []
    delta = wrap_angle(h1 - h0)
    q = int(math.ceil(abs(delta) / turn_step - 1e-12))
    return [wrap_angle(h0 + delta * m / q) for m in range(1, q)]


def generate_true_path(env: Environment, cfg: SimConfig) -> list[Pose]:
    """Ground-truth poses for ``cfg.laps`` laps of the environment boundary.

    Samples are ``cfg.step`` apart along the boundary and heading follows the
    current edge. Corners are turned in place.
    """
    boundary = env.boundary
    if len(boundary) < 3 or abs(boundary.signed_area()) <= 0.0:
        raise ValueError("degenerate boundary polygon")
    turn_step = None if cfg.turn_rate is None else cfg.turn_rate / cfg.sample_rate
    lap = [Pose(*p) for p in _lap(boundary, cfg.step, turn_step)]
    return lap * cfg.laps


def corrupt_odometry(
    true_path: list[Pose], model: OdometryNoiseModel, seed: int, sample_rate: float = 20.0
) -> OdometryTrace:
    """Dead-reckon ``true_path`` through noisy rotation-then-translation steps.

    Each step first rotates by the sampled heading change, then translates the
    sampled distance along the new heading. Deterministic for a given seed.
    """
    if len(true_path) < 2:
        raise ValueError("need at least 2 poses to build an odometry trace")
    truth = poses_to_array(true_path)
    d_rot = wrap_angles(np.diff(truth[:, 2]))
    d_trans = np.linalg.norm(np.diff(truth[:, :2], axis=0), axis=1)

    a1, a2, a3, a4 = model.alphas
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.standard_normal((len(d_rot), 2))
    rot_hat = d_rot + np.sqrt(a1 * d_rot**2 + a2 * d_trans**2) * u[:, 0]
    trans_hat = d_trans + np.sqrt(a3 * d_trans**2 + a4 * d_rot**2) * u[:, 1]

    est = np.empty_like(truth)
    est[0] = truth[0]
    heading = truth[0, 2] + np.cumsum(rot_hat)
    est[1:, 2] = wrap_angles(heading)
    est[1:, 0] = truth[0, 0] + np.cumsum(trans_hat * np.cos(heading))
    est[1:, 1] = truth[0, 1] + np.cumsum(trans_hat * np.sin(heading))

    return OdometryTrace(
        timestamps=np.arange(len(truth), dtype=float) / sample_rate,
        poses=poses_from_array(est),
        true_poses=list(true_path),
        metadata={"rng": RNG_ALGORITHM, "seed": int(seed), "alphas": list(model.alphas)},
    )


def simulate(env: Environment, cfg: SimConfig, model: OdometryNoiseModel) -> OdometryTrace:
    return corrupt_odometry(generate_true_path(env, cfg), model, cfg.seed, cfg.sample_rate)


# -- file formats -----------------------------------------------------------


def environment_from_dict(data: dict) -> Environment:
    try:
        boundary = data["boundary"]
    except (KeyError, TypeError):
        raise DataError("environment JSON needs a 'boundary' list of [x, y] points") from None
    try:
        return Environment(Polygon(boundary), str(data.get("name", "environment")))
    except ValueError as exc:
        raise DataError(f"invalid boundary: {exc}") from None


def load_environment(path) -> Environment:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return environment_from_dict(data)


def environment_to_dict(env: Environment) -> dict:
    return {"name": env.name, "boundary": [[float(x), float(y)] for x, y in env.boundary.vertices]}


def save_environment(env: Environment, path) -> None:
    Path(path).write_text(json.dumps(environment_to_dict(env), indent=2) + "\n")


def write_trace_csv(trace: OdometryTrace, path) -> None:
    """Write one row per sample; metadata goes in leading ``#`` comment lines."""
    with open(path, "w", newline="") as fh:
        for key in sorted(trace.metadata):
            fh.write(f"# {key}={json.dumps(trace.metadata[key])}\n")
        w = csv.writer(fh, lineterminator="\n")
        has_truth = trace.true_poses is not None
        w.writerow(TRACE_HEADER if has_truth else TRACE_HEADER[:4])
        truth = trace.true_poses if has_truth else [None] * len(trace)
        for t, p, q in zip(trace.timestamps, trace.poses, truth):
            row = [t, p.x, p.y, p.phi]
            if q is not None:
                row += [q.x, q.y, q.phi]
            w.writerow(["%.9g" % v for v in row])


def read_trace_csv(path) -> OdometryTrace:
    metadata = {}
    rows = []
    header = None
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                try:
                    metadata[key.strip()] = json.loads(value)
                except json.JSONDecodeError:
                    metadata[key.strip()] = value
                continue
            fields = next(csv.reader([line]))
            if header is None:
                if fields[:4] != TRACE_HEADER[:4]:
                    raise DataError(f"{path}:{lineno}: expected header starting with t,x,y,phi, got {line!r}")
                header = fields
                continue
            if len(fields) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(fields)}")
            try:
                values = [float(f) for f in fields]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric field in {line!r}") from None
            if not all(math.isfinite(v) for v in values):
                raise DataError(f"{path}:{lineno}: non-finite value in {line!r}")
            rows.append(values)
    if header is None:
        raise DataError(f"{path}: missing header")
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 samples, got {len(rows)}")
    a = np.array(rows)
    if np.any(np.diff(a[:, 0]) <= 0):
        k = int(np.argmax(np.diff(a[:, 0]) <= 0)) + 1
        raise DataError(f"{path}: timestamps not strictly increasing at sample {k}")
    truth = poses_from_array(a[:, 4:7]) if len(header) >= 7 else None
    return OdometryTrace(a[:, 0], poses_from_array(a[:, 1:4]), truth, metadata)
