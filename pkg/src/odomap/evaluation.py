"""Map scoring: area deviation after rigid alignment to ground truth."""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import TWO_PI, Polygon, rot, wrap_angle
from .loop_closure import CorrelationConfig, OrientationProfile, pairwise_mean_square

log = logging.getLogger(__name__)

# shift-score spread below which a boundary is considered featureless (rad^2)
MIN_MATCH_CONTRAST = 0.05
MATCH_SAMPLES = 200


class MatchError(RuntimeError):
    """No usable correspondences between two boundaries."""


@dataclass(frozen=True)
class RigidTransform2D:
    """``x -> R(angle) x + (tx, ty)``."""

    angle: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "angle", wrap_angle(float(self.angle)))
        object.__setattr__(self, "tx", float(self.tx))
        object.__setattr__(self, "ty", float(self.ty))

    def apply(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ rot(self.angle).T + np.array([self.tx, self.ty])

    def apply_polygon(self, poly: Polygon) -> Polygon:
        return Polygon(self.apply(poly.vertices))


@dataclass(frozen=True)
class AlignmentConfig:
    raster_resolution: float = 0.05  # m per cell
    gd_step0: float = 0.5  # m, initial step along the normalised gradient
    gd_max_iters: int = 500
    fd_epsilon: float = 0.1  # m, two raster cells

    def __post_init__(self):
        for k in ("raster_resolution", "gd_step0", "fd_epsilon"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be > 0")
        if self.gd_max_iters < 1:
            raise ValueError("gd_max_iters must be >= 1")


@dataclass
class EvaluationReport:
    delta_a: float
    transform: RigidTransform2D
    horn_delta_a: float
    iterations: int
    matched_pairs: int = 0

    def to_dict(self) -> dict:
        return {
            "delta_a": self.delta_a,
            "rotation": self.transform.angle,
            "tx": self.transform.tx,
            "ty": self.transform.ty,
            "horn_delta_a": self.horn_delta_a,
            "iterations": self.iterations,
        }


# -- rasterisation ----------------------------------------------------------


class _Grid:
    """Cells of size ``res`` aligned to the global lattice ``k * res``."""

    def __init__(self, lo, hi, res: float):
        self.res = res
        self.i0 = int(math.floor(lo[0] / res)) - 1
        self.j0 = int(math.floor(lo[1] / res)) - 1
        self.w = int(math.floor(hi[0] / res)) + 2 - self.i0
        self.h = int(math.floor(hi[1] / res)) + 2 - self.j0


@dataclass
class _Raster:
    """Coverage of one polygon plus the boundary pieces that produced it.

    Pieces are in grid units; ``cell`` is ``row * w + col`` of the cell a piece
    lies in.
    """

    cov: np.ndarray
    cell: np.ndarray
    pa: np.ndarray
    pb: np.ndarray


def _rasterize(poly: Polygon, grid: _Grid) -> _Raster:
    res = grid.res
    v = poly.ccw().vertices / res - np.array([grid.i0, grid.j0])
    a, b = v, np.roll(v, -1, axis=0)
    ts = []
    for p, q in zip(a, b):
        t = [0.0, 1.0]
        for k in (0, 1):
            lo, hi = sorted((p[k], q[k]))
            lines = np.arange(math.floor(lo) + 1, math.ceil(hi))
            if len(lines) and q[k] != p[k]:
                t.extend((lines - p[k]) / (q[k] - p[k]))
        ts.append(np.unique(np.clip(t, 0.0, 1.0)))
    counts = np.array([len(t) - 1 for t in ts])
    t0 = np.concatenate([t[:-1] for t in ts])
    t1 = np.concatenate([t[1:] for t in ts])
    e = np.repeat(np.arange(len(a)), counts)
    pa = a[e] + t0[:, None] * (b[e] - a[e])
    pb = a[e] + t1[:, None] * (b[e] - a[e])
    nonzero = np.any(pa != pb, axis=1)
    pa, pb = pa[nonzero], pb[nonzero]
    mid = 0.5 * (pa + pb)
    col = np.floor(mid[:, 0]).astype(int)
    row = np.floor(mid[:, 1]).astype(int)
    frac = mid[:, 0] - col
    dy = pb[:, 1] - pa[:, 1]
    acc = np.zeros((grid.h, grid.w + 1))
    np.add.at(acc, (row, col), dy * (1.0 - frac))
    np.add.at(acc, (row, col + 1), dy * frac)
    cov = np.minimum(np.abs(np.cumsum(acc, axis=1)[:, : grid.w]), 1.0)
    return _Raster(cov, row * grid.w + col, pa - np.c_[col, row], pb - np.c_[col, row])


def coverage(poly: Polygon, grid: _Grid) -> np.ndarray:
    """Exact fraction of each grid cell covered by ``poly`` (shape (h, w)).

    Every edge is cut at the grid lines; each piece deposits its signed
    height into the cell it crosses and the one to its right, split by the
    piece's mean horizontal position. A running sum along each row then
    yields the covered area per cell.
    """
    return _rasterize(poly, grid).cov


def _single_pieces(r: _Raster) -> dict:
    cells, first, counts = np.unique(r.cell, return_index=True, return_counts=True)
    one = counts == 1
    return dict(zip(cells[one].tolist(), first[one].tolist()))


def _clip_interval(p0, p1, qa, qb, strict=False):
    """Parameter range of p0 + t (p1 - p0), t in [0, 1], left of line qa -> qb."""
    dq = qb - qa
    f0 = dq[:, 0] * (p0[:, 1] - qa[:, 1]) - dq[:, 1] * (p0[:, 0] - qa[:, 0])
    f1 = dq[:, 0] * (p1[:, 1] - qa[:, 1]) - dq[:, 1] * (p1[:, 0] - qa[:, 0])
    df = f1 - f0
    lo = np.zeros(len(p0))
    hi = np.ones(len(p0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -f0 / df
    flat = df == 0.0
    outside = f0 <= 0.0 if strict else f0 < 0.0
    hi = np.where(flat & outside, -1.0, hi)
    lo = np.where(~flat & (df > 0), np.maximum(lo, t), lo)
    hi = np.where(~flat & (df < 0), np.minimum(hi, t), hi)
    return lo, hi


def _green(p0, p1, lo, hi) -> np.ndarray:
    """Signed area term of the clipped segments p(lo) -> p(hi)."""
    d = p1 - p0
    s = p0 + lo[:, None] * d
    e = p0 + hi[:, None] * d
    term = 0.5 * (s[:, 0] * e[:, 1] - e[:, 0] * s[:, 1])
    return np.where(hi > lo, term, 0.0)


_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def _halfplane_overlap(a0, a1, b0, b1) -> np.ndarray:
    """Area of the unit square left of both chords a0->a1 and b0->b1."""
    area = np.zeros(len(a0))
    for k in range(4):
        p0 = np.broadcast_to(_SQUARE[k], a0.shape)
        p1 = np.broadcast_to(_SQUARE[(k + 1) % 4], a0.shape)
        lo1, hi1 = _clip_interval(p0, p1, a0, a1)
        lo2, hi2 = _clip_interval(p0, p1, b0, b1)
        area += _green(p0, p1, np.maximum(lo1, lo2), np.minimum(hi1, hi2))
    lo, hi = _clip_interval(a0, a1, b0, b1)
    area += _green(a0, a1, lo, hi)
    lo, hi = _clip_interval(b0, b1, a0, a1, strict=True)
    area += _green(b0, b1, lo, hi)
    return np.clip(area, 0.0, 1.0)


def _intersection_area_cells(ra: _Raster, rb: _Raster) -> np.ndarray:
    """Per-cell covered fraction of the intersection.

    Cells where one polygon is full or empty are exact through ``min``. Where
    both are partial and each crosses the cell with a single straight piece
    the overlap of the two half-planes is computed exactly; cells holding a
    polygon vertex keep the ``min`` bound.
    """
    a, b = ra.cov, rb.cov
    inter = np.minimum(a, b)
    tol = 1e-12
    both = (a > tol) & (a < 1 - tol) & (b > tol) & (b < 1 - tol)
    if not both.any():
        return inter
    sa, sb = _single_pieces(ra), _single_pieces(rb)
    cells = [c for c in np.flatnonzero(both.ravel()).tolist() if c in sa and c in sb]
    if not cells:
        return inter
    ia = np.array([sa[c] for c in cells])
    ib = np.array([sb[c] for c in cells])
    a0, a1, b0, b1 = ra.pa[ia], ra.pb[ia], rb.pa[ib], rb.pb[ib]
    da, db = a1 - a0, b1 - b0
    cross = da[:, 0] * db[:, 1] - da[:, 1] * db[:, 0]
    off = da[:, 0] * (b0[:, 1] - a0[:, 1]) - da[:, 1] * (b0[:, 0] - a0[:, 0])
    val = _halfplane_overlap(a0, a1, b0, b1)
    flat = inter.ravel().copy()
    av, bv = a.ravel()[cells], b.ravel()[cells]
    collinear = (np.abs(cross) <= 1e-12) & (np.abs(off) <= 1e-12)
    same = np.sum(da * db, axis=1) > 0
    val = np.where(collinear, np.where(same, np.minimum(av, bv), np.maximum(av + bv - 1.0, 0.0)), val)
    flat[cells] = val
    return flat.reshape(inter.shape)


def _bbox(*polys: Polygon):
    pts = np.vstack([p.vertices for p in polys])
    return pts.min(axis=0), pts.max(axis=0)


def _iou(ra: _Raster, rb: _Raster) -> float:
    inter = float(_intersection_area_cells(ra, rb).sum())
    union = float(ra.cov.sum() + rb.cov.sum()) - inter
    if union <= 0.0:
        raise ValueError("union of the two polygons has zero area")
    return inter / union


def area_deviation(estimate: Polygon, truth: Polygon, resolution: float = 0.05) -> float:
    """One minus intersection-over-union of the enclosed areas, via rasterisation.

    Cells carry exact covered fractions, so the result is resolution-limited
    only in cells that hold a polygon vertex and the other boundary.
    """
    grid = _Grid(*_bbox(estimate, truth), resolution)
    return 1.0 - _iou(_rasterize(estimate, grid), _rasterize(truth, grid))


class _AreaScorer:
    """Area deviation against a fixed truth, reusing the truth raster."""

    def __init__(self, truth: Polygon, resolution: float):
        self.truth = truth
        self.res = resolution
        self.grid = None
        self.truth_raster = None

    def __call__(self, estimate: Polygon) -> float:
        lo, hi = _bbox(estimate, self.truth)
        g = self.grid
        need = _Grid(lo, hi, self.res)
        if g is None or need.i0 < g.i0 or need.j0 < g.j0 or need.i0 + need.w > g.i0 + g.w or need.j0 + need.h > g.j0 + g.h:
            # grow with margin so small moves reuse the truth raster
            pad = 0.25 * (hi - lo) + 4 * self.res
            self.grid = g = _Grid(lo - pad, hi + pad, self.res)
            self.truth_raster = _rasterize(self.truth, g)
        return 1.0 - _iou(_rasterize(estimate, g), self.truth_raster)


# -- correspondences and Horn alignment ------------------------------------


def _resample(poly: Polygon, n: int) -> tuple[np.ndarray, np.ndarray]:
    """``n`` points at equal arclength steps and their normalised positions."""
    v = poly.vertices
    d = np.roll(v, -1, axis=0) - v
    lengths = np.linalg.norm(d, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    s = np.arange(n) * cum[-1] / n
    e = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(v) - 1)
    pts = v[e] + ((s - cum[e]) / lengths[e])[:, None] * d[e]
    return pts, s


def _unrolled_profile(poly: Polygon, laps: int = 3) -> OrientationProfile:
    """Orientation profile of ``laps`` consecutive traversals, starting one lap early."""
    v = poly.vertices
    d = np.roll(v, -1, axis=0) - v
    lengths = np.linalg.norm(d, axis=1)
    heading = np.arctan2(d[:, 1], d[:, 0])
    turn = np.diff(np.concatenate([heading, heading[:1]]))
    turn = (turn + math.pi) % TWO_PI - math.pi
    seg_len = np.tile(lengths, laps)
    seg_turn = np.tile(turn, laps)
    ls = np.concatenate([[0.0], np.cumsum(seg_len)])[:-1]
    vals = heading[0] + np.concatenate([[0.0], np.cumsum(seg_turn)])[:-1]
    return OrientationProfile(ls, vals)


def _boundary_windows(poly: Polygon, n: int, cfg: CorrelationConfig):
    pts, s = _resample(poly, n)
    # headings of the resampled outline: chords step over sub-sample zigzags
    ring = Polygon(pts)
    perim = ring.perimeter()
    prof = _unrolled_profile(ring)
    x = perim + s * (perim / poly.perimeter())  # middle lap
    offs = np.linspace(-cfg.l_nh, cfg.l_nh, cfg.m)
    windows = prof(x[:, None] + offs[None, :]) - prof(x)[:, None]
    return pts, windows


def _shift_candidates(estimate: Polygon, truth: Polygon, cfg: CorrelationConfig, n_samples: int):
    est, tru = estimate.ccw(), truth.ccw()
    l_nh = min(cfg.l_nh, 0.5 * min(est.perimeter(), tru.perimeter()))
    wcfg = CorrelationConfig(l_nh=l_nh, m=cfg.m, c_min=cfg.c_min)
    pe, we = _boundary_windows(est, n_samples, wcfg)
    pt, wt = _boundary_windows(tru, n_samples, wcfg)
    C = pairwise_mean_square(we, wt)
    rows = np.arange(n_samples)
    score = np.array([C[rows, (rows + o) % n_samples].mean() for o in range(n_samples)])
    if score.max() - score.min() < MIN_MATCH_CONTRAST:
        raise MatchError("boundaries are featureless; use the exhaustive rotation search instead")
    # cyclic local minima of the shift score, best first
    minima = np.flatnonzero((score <= np.roll(score, 1)) & (score < np.roll(score, -1)))
    order = minima[np.argsort(score[minima], kind="stable")]
    return pe, pt, C, order


def _pairs_for_shift(pe, pt, C, o: int, c_min: float):
    n = len(pe)
    rows = np.arange(n)
    cols = (rows + o) % n
    keep = C[rows, cols] < c_min
    return [(pe[i], pt[j]) for i, j in zip(rows[keep], cols[keep])]


def match_boundary_points(estimate: Polygon, truth: Polygon, cfg: CorrelationConfig | None = None,
                          n_samples: int = MATCH_SAMPLES, candidates: int = 1):
    """Corresponding points on two closed boundaries by orientation-profile shape.

    Both boundaries are resampled at ``n_samples`` equal arclength steps (after
    orienting them counter-clockwise) and each sample gets a grounded window of
    the cumulative heading. The cross correlation error between every estimate
    window and every truth window is averaged along each cyclic shift of the
    truth samples; the best shift gives the correspondence, and samples whose
    own error is below ``c_min`` become pairs.

    With ``candidates > 1`` a list of pair lists is returned, one per locally
    best shift in increasing score order; self-similar outlines (rectilinear
    floor plans) can score a wrong shift best.
    """
    cfg = cfg or CorrelationConfig()
    pe, pt, C, order = _shift_candidates(estimate, truth, cfg, n_samples)
    found = []
    for o in order:
        pairs = _pairs_for_shift(pe, pt, C, int(o), cfg.c_min)
        if len(pairs) >= 2:
            found.append(pairs)
        if len(found) == candidates:
            break
    if not found:
        raise MatchError(
            f"fewer than 2 boundary samples match below c_min={cfg.c_min}; "
            "use the exhaustive rotation search instead"
        )
    return found if candidates > 1 else found[0]


def align_horn(pairs) -> RigidTransform2D:
    """Least-squares rotation and translation taking the first points onto the second."""
    if len(pairs) < 2:
        raise ValueError("Horn alignment needs at least 2 point pairs")
    src = np.array([p for p, _ in pairs], dtype=float)
    dst = np.array([q for _, q in pairs], dtype=float)
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    a, b = src - cs, dst - cd
    if np.allclose(a, 0.0, atol=1e-12):
        raise ValueError("source points are all coincident; rotation is undetermined")
    dot = float(np.sum(a * b))
    cross = float(np.sum(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]))
    angle = math.atan2(cross, dot)
    t = cd - rot(angle) @ cs
    return RigidTransform2D(angle, t[0], t[1])


def align_rotation_search(estimate: Polygon, truth: Polygon, resolution: float = 0.05,
                          n_angles: int = 72) -> RigidTransform2D:
    """Fallback initial guess: centroids aligned, best of ``n_angles`` rotations."""
    scorer = _AreaScorer(truth, resolution)
    ce, ct = _centroid(estimate), _centroid(truth)
    best = None
    for angle in np.arange(n_angles) * TWO_PI / n_angles:
        t = ct - rot(angle) @ ce
        T = RigidTransform2D(angle, t[0], t[1])
        score = scorer(T.apply_polygon(estimate))
        if best is None or score < best[0]:
            best = (score, T)
    return best[1]


def _centroid(poly: Polygon) -> np.ndarray:
    v = poly.vertices
    w = np.roll(v, -1, axis=0)
    cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
    a = cross.sum() / 2.0
    if abs(a) < 1e-15:
        return v.mean(axis=0)
    return np.array([((v[:, 0] + w[:, 0]) * cross).sum(), ((v[:, 1] + w[:, 1]) * cross).sum()]) / (6.0 * a)


# -- refinement -------------------------------------------------------------


def refine_alignment(estimate: Polygon, truth: Polygon, init: RigidTransform2D,
                     cfg: AlignmentConfig | None = None) -> tuple[RigidTransform2D, float, int]:
    """Gradient descent on area deviation over (angle, tx, ty).

    The angle is parameterised as arc length at the estimate's radius of
    gyration so all three coordinates are in meters. Gradients are central
    differences with step ``fd_epsilon``; steps along the normalised negative
    gradient are halved until the deviation drops, and descent stops when no
    improving step above a tenth of a raster cell exists. A compass search
    over the three coordinates then polishes the result down to the same step.
    """
    cfg = cfg or AlignmentConfig()
    score = _AreaScorer(truth, cfg.raster_resolution)
    c = _centroid(estimate)
    local = estimate.vertices - c
    radius = max(float(np.sqrt((local**2).sum(axis=1).mean())), 1e-9)
    # state: (angle * radius, translation of the centroid)
    c0 = rot(init.angle) @ c + np.array([init.tx, init.ty])
    z = np.array([init.angle * radius, c0[0], c0[1]])

    def f(z):
        R = rot(z[0] / radius)
        return score(Polygon(local @ R.T + z[1:]))

    fz = f(z)
    step = cfg.gd_step0
    min_step = 0.1 * cfg.raster_resolution
    eps = cfg.fd_epsilon
    it = 0
    while it < cfg.gd_max_iters:
        it += 1
        g = np.empty(3)
        for k in range(3):
            dz = np.zeros(3)
            dz[k] = eps
            g[k] = (f(z + dz) - f(z - dz)) / (2 * eps)
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            break
        improved = False
        while step >= min_step:
            z_new = z - step * g / gn
            f_new = f(z_new)
            if f_new < fz:
                z, fz = z_new, f_new
                improved = True
                step = min(2.0 * step, cfg.gd_step0)
                break
            step *= 0.5
        if not improved:
            break
    # the deviation has kinks where edges cross vertices; polish with a
    # compass search, which needs no gradient
    step = eps
    while step >= min_step and it < cfg.gd_max_iters:
        it += 1
        moved = False
        for k in range(3):
            for sign in (1.0, -1.0):
                z_new = z.copy()
                z_new[k] += sign * step
                f_new = f(z_new)
                if f_new < fz:
                    z, fz, moved = z_new, f_new, True
                    break
        if not moved:
            step *= 0.5
    angle = z[0] / radius
    t = z[1:] - rot(angle) @ c
    return RigidTransform2D(angle, t[0], t[1]), fz, it


def evaluate_map(estimate: Polygon, truth: Polygon, cfg: AlignmentConfig | None = None,
                 corr: CorrelationConfig | None = None, candidates: int = 5) -> EvaluationReport:
    """Area deviation of ``estimate`` against ``truth`` after rigid alignment.

    The alignment starts from Horn's method on shape-matched boundary points,
    trying the ``candidates`` best boundary shifts and keeping the one with
    the lowest deviation (for featureless boundaries, a coarse rotation search
    instead), and is refined by gradient descent on the deviation itself.
    """
    cfg = cfg or AlignmentConfig()
    score = _AreaScorer(truth, cfg.raster_resolution)
    n_pairs = 0
    try:
        found = match_boundary_points(estimate, truth, corr, candidates=candidates)
        best = None
        for pairs in found if candidates > 1 else [found]:
            try:
                T = align_horn(pairs)
            except ValueError:
                continue
            da = score(T.apply_polygon(estimate))
            if best is None or da < best[0]:
                best = (da, T, len(pairs))
        if best is None:
            raise MatchError("no candidate correspondence gave a usable Horn alignment")
        _, init, n_pairs = best
    except MatchError as exc:
        warnings.warn(f"{exc}; falling back to rotation search", stacklevel=2)
        init = align_rotation_search(estimate, truth, cfg.raster_resolution)
    horn_da = area_deviation(init.apply_polygon(estimate), truth, cfg.raster_resolution)
    T, da, iters = refine_alignment(estimate, truth, init, cfg)
    if da > horn_da:
        T, da = init, horn_da
    return EvaluationReport(da, T, horn_da, iters, n_pairs)


def write_evaluation_json(report: EvaluationReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
