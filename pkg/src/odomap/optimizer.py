"""Levenberg-Marquardt pose graph optimization."""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import Pose, poses_from_array, poses_to_array, wrap_angle, wrap_angles
from .pose_graph import Constraint, PoseGraph

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LmConfig:
    max_iterations: int = 100
    lambda0: float = 1e-4
    lambda_up: float = 10.0
    lambda_down: float = 0.1
    tol_dx: float = 1e-8
    tol_de: float = 1e-10
    lambda_max: float = 1e12

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for k in ("lambda0", "tol_dx", "tol_de", "lambda_max"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be > 0")
        if not (self.lambda_up > 1.0 > self.lambda_down > 0.0):
            raise ValueError("need lambda_up > 1 > lambda_down > 0")


@dataclass
class OptimizationReport:
    iterations: int = 0
    initial_error: float = 0.0
    final_error: float = 0.0
    error_trace: list[float] = field(default_factory=list)
    converged: bool = False
    message: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


class OptimizationError(RuntimeError):
    def __init__(self, msg: str, report: OptimizationReport):
        super().__init__(msg)
        self.report = report


def residual(p_i: Pose, p_j: Pose, c: Constraint) -> np.ndarray:
    """``(p_j (-) p_i) - xi_hat`` with the angle component wrapped."""
    cs, sn = math.cos(p_i.phi), math.sin(p_i.phi)
    dx, dy = p_j.x - p_i.x, p_j.y - p_i.y
    xi = c.xi_hat
    return np.array([
        cs * dx + sn * dy - xi.dx,
        -sn * dx + cs * dy - xi.dy,
        wrap_angle(p_j.phi - p_i.phi - xi.dphi),
    ])


class _Problem:
    """Constraint data flattened into arrays for vectorised evaluation."""

    def __init__(self, g: PoseGraph):
        cons = g.constraints
        self.n = len(g.vertices)
        self.src = np.array([c.source for c in cons], dtype=int)
        self.tgt = np.array([c.target for c in cons], dtype=int)
        self.meas = np.array([c.xi_hat.as_array() for c in cons]).reshape(-1, 3)
        self.info = np.array([c.information for c in cons]).reshape(-1, 3)

    def residuals(self, X: np.ndarray) -> np.ndarray:
        xi, xj = X[self.src], X[self.tgt]
        c, s = np.cos(xi[:, 2]), np.sin(xi[:, 2])
        d = xj[:, :2] - xi[:, :2]
        e = np.empty((len(self.src), 3))
        e[:, 0] = c * d[:, 0] + s * d[:, 1] - self.meas[:, 0]
        e[:, 1] = -s * d[:, 0] + c * d[:, 1] - self.meas[:, 1]
        e[:, 2] = wrap_angles(xj[:, 2] - xi[:, 2] - self.meas[:, 2])
        return e

    def error(self, X: np.ndarray) -> float:
        e = self.residuals(X)
        return float(np.sum(self.info * e * e))

    def jacobian(self, X: np.ndarray) -> sp.csr_matrix:
        """Sparse (3K, 3n) Jacobian of the stacked residuals."""
        k = len(self.src)
        xi, xj = X[self.src], X[self.tgt]
        c, s = np.cos(xi[:, 2]), np.sin(xi[:, 2])
        d = xj[:, :2] - xi[:, :2]
        row = np.arange(k) * 3
        si, ti = self.src * 3, self.tgt * 3
        one = np.ones(k)
        entries = [
            # translation residual, x component
            (row, si, -c), (row, si + 1, -s), (row, si + 2, -s * d[:, 0] + c * d[:, 1]),
            (row, ti, c), (row, ti + 1, s),
            # y component
            (row + 1, si, s), (row + 1, si + 1, -c), (row + 1, si + 2, -c * d[:, 0] - s * d[:, 1]),
            (row + 1, ti, -s), (row + 1, ti + 1, c),
            # heading
            (row + 2, si + 2, -one), (row + 2, ti + 2, one),
        ]
        r = np.concatenate([e[0] for e in entries])
        cidx = np.concatenate([e[1] for e in entries])
        v = np.concatenate([e[2] for e in entries])
        return sp.csr_matrix((v, (r, cidx)), shape=(3 * k, 3 * self.n))


def stacked_residual(g: PoseGraph, X: np.ndarray | None = None) -> np.ndarray:
    """All constraint residuals, flattened in constraint order."""
    X = poses_to_array(g.vertices) if X is None else np.asarray(X, dtype=float).reshape(-1, 3)
    return _Problem(g).residuals(X).ravel()


def stacked_jacobian(g: PoseGraph, X: np.ndarray | None = None) -> np.ndarray:
    X = poses_to_array(g.vertices) if X is None else np.asarray(X, dtype=float).reshape(-1, 3)
    return _Problem(g).jacobian(X).toarray()


def total_error(g: PoseGraph) -> float:
    """Sum of information-weighted squared residuals over all constraints."""
    if not g.constraints:
        return 0.0
    return _Problem(g).error(poses_to_array(g.vertices))


def lm_optimize(g: PoseGraph, cfg: LmConfig | None = None) -> tuple[PoseGraph, OptimizationReport]:
    """Minimise :func:`total_error` over all vertices but the first.

    Solves ``(J^T W J + lambda I) dx = -J^T W e`` each iteration and keeps a
    step only if the error drops; rejected steps raise the damping.
    """
    cfg = cfg or LmConfig()
    prob = _Problem(g)
    X = poses_to_array(g.vertices)
    err = prob.error(X) if len(prob.src) else 0.0
    report = OptimizationReport(initial_error=err, final_error=err, error_trace=[err])

    if not g.loop_closures:
        report.converged = True
        report.message = "no loop closures; odometric chain is already optimal"
        return g, report
    if err == 0.0:
        report.converged = True
        report.message = "zero initial error"
        return g, report

    free = np.arange(3, 3 * prob.n)  # vertex 0 anchors the gauge
    W = sp.diags(prob.info.ravel())
    lam = cfg.lambda0
    eye = sp.identity(len(free), format="csc")
    for it in range(1, cfg.max_iterations + 1):
        report.iterations = it
        J = prob.jacobian(X)[:, free]
        e = prob.residuals(X).ravel()
        JtW = (J.T @ W).tocsr()
        H = (JtW @ J).tocsc()
        b = JtW @ e
        while True:
            with warnings.catch_warnings():
                warnings.simplefilter("error", spla.MatrixRankWarning)
                try:
                    dx = spla.spsolve(H + lam * eye, -b)
                    ok = bool(np.all(np.isfinite(dx)))
                except (spla.MatrixRankWarning, RuntimeError):
                    ok = False
            if not ok:
                lam *= cfg.lambda_up
                if lam > cfg.lambda_max:
                    report.message = "normal matrix singular up to lambda_max"
                    raise OptimizationError(report.message, report)
                continue
            X_new = X.copy()
            X_new.reshape(-1)[free] += dx
            X_new[:, 2] = wrap_angles(X_new[:, 2])
            err_new = prob.error(X_new)
            if err_new < err:
                break
            lam *= cfg.lambda_up
            if lam > cfg.lambda_max:
                report.converged = True
                report.message = "no further decrease possible"
                report.final_error = err
                return g.with_vertices(poses_from_array(X)), report
        rel = (err - err_new) / err
        X, err = X_new, err_new
        report.error_trace.append(err)
        lam = max(lam * cfg.lambda_down, 1e-15)
        log.debug("lm iteration %d: error %.6g, lambda %.3g", it, err, lam)
        if np.linalg.norm(dx) < cfg.tol_dx or rel < cfg.tol_de or err == 0.0:
            report.converged = True
            report.message = "converged"
            break
    else:
        report.message = "max_iterations reached"
    report.final_error = err
    return g.with_vertices(poses_from_array(X)), report


def write_report_json(report: OptimizationReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
