"""Built-in test environments."""

from __future__ import annotations

import numpy as np

from .geometry import Polygon
from .sim import Environment


def _scaled(vertices, perimeter: float | None) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    if perimeter is not None:
        v = v * (perimeter / Polygon(v).perimeter())
    return v


def unit_square() -> Environment:
    return Environment(Polygon([[0, 0], [1, 0], [1, 1], [0, 1]]), "unit_square")


def l_shape(size: float = 1.0) -> Environment:
    """Concave L: a square with its upper-right quarter removed."""
    v = np.array([[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]]) * (size / 2.0)
    return Environment(Polygon(v), "l_shape")


def apartment(perimeter: float = 100.0) -> Environment:
    """Rectilinear floor plan: rooms off a hallway, door recesses and a bay."""
    v = [
        (0, 0), (7, 0), (7, 1), (9, 1), (9, 0), (16, 0), (16, 5), (14, 5),
        (14, 7), (16, 7), (16, 12), (10, 12), (10, 10), (8, 10), (8, 12),
        (3, 12), (3, 9), (0, 9), (0, 6), (2, 6), (2, 4), (0, 4),
    ]
    return Environment(Polygon(_scaled(v, perimeter)), "apartment")


def courtyard(perimeter: float = 106.79) -> Environment:
    """Irregular lawn outline with oblique edges and one inward notch."""
    v = [
        (0, 0), (12, -1), (20, 2), (22, 9), (17, 10), (16, 14),
        (21, 17), (18, 24), (8, 25), (2, 20), (4, 12), (-1, 7),
    ]
    return Environment(Polygon(_scaled(v, perimeter)), "courtyard")


BUILTIN = {
    "unit_square": unit_square,
    "l_shape": l_shape,
    "apartment": apartment,
    "courtyard": courtyard,
}
