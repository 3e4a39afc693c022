"""Plain-text SVG figures: path, correlation heatmap, before/after panels, overlay.

Everything is written by hand so the output is deterministic and diff-able;
no plotting library is needed.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .geometry import Polygon

PANEL = 400  # px, drawing area of one panel
MARGIN = 20
HEATMAP_MAX_CELLS = 100


def _f(v: float) -> str:
    return f"{v:.2f}"


class _Frame:
    """World-to-pixel map for one panel; y points up in the world."""

    def __init__(self, pts: np.ndarray, x0: float = 0.0, size: float = PANEL):
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        span = max(float((hi - lo).max()), 1e-9)
        self.scale = size / span
        self.lo, self.hi = lo, hi
        self.x0, self.size = x0 + MARGIN, size

    def xy(self, p) -> tuple[float, float]:
        x = self.x0 + (p[0] - self.lo[0]) * self.scale
        y = MARGIN + self.size - (p[1] - self.lo[1]) * self.scale
        return x, y

    def points(self, pts) -> str:
        return " ".join(f"{_f(x)},{_f(y)}" for x, y in (self.xy(p) for p in pts))

    def ring(self, pts) -> str:
        return "M " + self.points(pts) + " Z"


def _document(width: float, height: float, body: list[str], title: str = "") -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width)}" height="{_f(height)}" '
        f'viewBox="0 0 {_f(width)} {_f(height)}">',
        f'<rect width="100%" height="100%" fill="white"/>',
    ]
    if title:
        head.append(f'<text x="{MARGIN}" y="14" font-family="sans-serif" font-size="12">{_escape(title)}</text>')
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _size(n_panels: int = 1) -> tuple[float, float]:
    return n_panels * (PANEL + 2 * MARGIN), PANEL + 2 * MARGIN


def path_svg(positions: np.ndarray, dominant: np.ndarray | None = None, title: str = "") -> str:
    """Trajectory as a grey polyline with dominant points as red dots."""
    positions = np.asarray(positions, dtype=float)
    fr = _Frame(positions)
    body = [f'<polyline points="{fr.points(positions)}" fill="none" stroke="#555" stroke-width="1"/>']
    if dominant is not None:
        for p in np.asarray(dominant, dtype=float):
            x, y = fr.xy(p)
            body.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="2.5" fill="red"/>')
    return _document(*_size(), body, title)


def _blocks(C: np.ndarray, max_cells: int) -> np.ndarray:
    """Block-minimum downsampling so large matrices stay small on disk."""
    n = len(C)
    if n <= max_cells:
        return C
    edges = np.linspace(0, n, max_cells + 1).astype(int)
    out = np.empty((max_cells, max_cells))
    for a in range(max_cells):
        rows = C[edges[a]:edges[a + 1]]
        for b in range(max_cells):
            out[a, b] = rows[:, edges[b]:edges[b + 1]].min()
    return out


def heatmap_svg(C: np.ndarray, pairs=(), eps: float = 1e-6, title: str = "") -> str:
    """Grey-scale image of log(C + eps); dark means similar, blank means not comparable.

    Loop pairs ``(i, j, ...)`` are marked with red dots.
    """
    C = np.asarray(C, dtype=float)
    n = len(C)
    D = _blocks(C, HEATMAP_MAX_CELLS)
    k = len(D)
    cell = PANEL / max(k, 1)
    finite = np.isfinite(D)
    L = np.full(D.shape, np.nan)
    L[finite] = np.log(D[finite] + eps)
    lo, hi = (float(L[finite].min()), float(L[finite].max())) if finite.any() else (0.0, 1.0)
    span = hi - lo or 1.0
    body = []
    for a in range(k):
        for b in range(k):
            if not finite[a, b]:
                continue
            g = int(round(255 * (L[a, b] - lo) / span))
            body.append(
                f'<rect x="{_f(MARGIN + b * cell)}" y="{_f(MARGIN + a * cell)}" width="{_f(cell)}" '
                f'height="{_f(cell)}" fill="rgb({g},{g},{g})"/>'
            )
    s = PANEL / max(n, 1)
    for p in pairs:
        i, j = int(p[0]), int(p[1])
        for r, c in ((i, j), (j, i)):
            body.append(f'<circle cx="{_f(MARGIN + (c + 0.5) * s)}" cy="{_f(MARGIN + (r + 0.5) * s)}" r="2" fill="red"/>')
    body.append(f'<rect x="{MARGIN}" y="{MARGIN}" width="{PANEL}" height="{PANEL}" fill="none" stroke="black"/>')
    return _document(*_size(), body, title or f"log(C + {eps:g}), range [{lo:.3g}, {hi:.3g}]")


def before_after_svg(before: np.ndarray, after: np.ndarray, loops=(), title: str = "") -> str:
    """Two panels: odometric vertices and optimized vertices, loop edges dashed."""
    body = []
    for k, (pts, label) in enumerate(((before, "before"), (after, "after"))):
        pts = np.asarray(pts, dtype=float)[:, :2]
        fr = _Frame(pts, x0=k * (PANEL + 2 * MARGIN))
        body.append(f'<polyline points="{fr.points(pts)}" fill="none" stroke="#1f4e9c" stroke-width="1"/>')
        for i, j in loops:
            (x1, y1), (x2, y2) = fr.xy(pts[i]), fr.xy(pts[j])
            body.append(
                f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" stroke="orange" '
                f'stroke-width="0.8" stroke-dasharray="3,2"/>'
            )
        body.append(
            f'<text x="{_f(fr.x0)}" y="{PANEL + 2 * MARGIN - 4}" font-family="sans-serif" font-size="12">{label}</text>'
        )
    return _document(*_size(2), body, title)


def overlay_svg(estimate: Polygon, truth: Polygon, delta_a: float | None = None) -> str:
    """Truth in black, aligned estimate in blue, symmetric difference shaded light blue."""
    fr = _Frame(np.vstack([estimate.vertices, truth.vertices]))
    # even-odd fill of both rings together shades exactly the symmetric difference
    body = [
        f'<path d="{fr.ring(truth.vertices)} {fr.ring(estimate.vertices)}" fill="#9fd3f5" '
        f'fill-rule="evenodd" stroke="none"/>',
        f'<path d="{fr.ring(truth.vertices)}" fill="none" stroke="black" stroke-width="1.5"/>',
        f'<path d="{fr.ring(estimate.vertices)}" fill="none" stroke="#1f4e9c" stroke-width="1"/>',
    ]
    title = "" if delta_a is None or not math.isfinite(delta_a) else f"deviation {100 * delta_a:.2f}%"
    return _document(*_size(), body, title)


def write_svg(text: str, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path
