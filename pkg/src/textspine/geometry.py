"""Polygon arithmetic for text-spine shrinking and instance dilation.

Polygons are ``(N, 2)`` float64 arrays of (x, y) pixel coordinates, implicitly
closed.  :func:`as_polygon` normalizes to counter-clockwise (positive shoelace
area in the x-right / y-up sense of the raw numbers).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import shapely
from shapely.geometry import MultiPolygon, Polygon as _ShapelyPolygon
from shapely.geometry.polygon import orient

from .errors import GeometryError, ParameterError

log = logging.getLogger(__name__)

MITER_LIMIT = 2.0


def _dedupe(pts: np.ndarray) -> np.ndarray:
    if len(pts) > 1 and np.array_equal(pts[0], pts[-1]):
        pts = pts[:-1]
    if len(pts) < 2:
        return pts
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(pts[1:] != pts[:-1], axis=1)
    pts = pts[keep]
    while len(pts) > 1 and np.array_equal(pts[0], pts[-1]):
        pts = pts[:-1]
    return pts


def signed_area(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def as_polygon(points, orient_ccw: bool = True) -> np.ndarray:
    """Validate ``points`` as a polygon; drop repeated vertices; orient CCW.

    Raises :class:`GeometryError` when fewer than 3 distinct vertices remain.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise GeometryError(f"polygon must be an (N, 2) array, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise GeometryError("polygon has non-finite coordinates")
    pts = _dedupe(pts)
    if len(pts) < 3:
        raise GeometryError(f"polygon needs at least 3 distinct vertices, got {len(pts)}")
    if orient_ccw and signed_area(pts) < 0:
        pts = pts[::-1].copy()
    return pts


def area(p) -> float:
    return abs(signed_area(as_polygon(p, orient_ccw=False)))


def perimeter(p) -> float:
    p = as_polygon(p, orient_ccw=False)
    return float(np.sum(np.hypot(*(np.roll(p, -1, axis=0) - p).T)))


def is_simple(p) -> bool:
    """True when the closed ring has no self-intersections."""
    try:
        p = as_polygon(p, orient_ccw=False)
    except GeometryError:
        return False
    return bool(shapely.LinearRing(p).is_simple)


def _from_shapely(poly: _ShapelyPolygon, ccw: bool) -> np.ndarray:
    ring = orient(poly, 1.0 if ccw else -1.0).exterior.coords
    return np.asarray(ring, dtype=np.float64)[:-1]


def _components(geom) -> list:
    if geom.is_empty:
        return []
    if isinstance(geom, _ShapelyPolygon):
        return [geom]
    if isinstance(geom, MultiPolygon):
        return list(geom.geoms)
    return [g for g in getattr(geom, "geoms", []) if isinstance(g, _ShapelyPolygon)]


def repair_polygon(p, warn: bool = True) -> np.ndarray:
    """Return ``p`` if simple, else the largest piece of its even-odd decomposition."""
    p = as_polygon(p)
    if is_simple(p):
        return p
    pieces = _components(shapely.make_valid(_ShapelyPolygon(p)))
    if not pieces:
        raise GeometryError("self-intersecting polygon has no area after repair")
    best = max(pieces, key=lambda g: g.area)
    log.log(logging.WARNING if warn else logging.DEBUG, "repaired self-intersecting polygon (%d pieces, kept area %.3f)", len(pieces), best.area)
    return as_polygon(_from_shapely(best, ccw=True))


def shrink_offset(p, r: float) -> float:
    """Inward offset distance ``area / perimeter * (1 - r**2)`` for shrink ratio ``r``."""
    if not 0.0 < r <= 1.0:
        raise ParameterError(f"shrink ratio must lie in (0, 1], got {r}")
    length = perimeter(p)
    if length == 0.0:
        raise GeometryError("polygon has zero perimeter")
    return area(p) / length * (1.0 - r * r)


def offset_polygon(p, d: float, miter_limit: float = MITER_LIMIT, min_area: float = 1.0) -> list:
    """Offset outward (``d > 0``) or inward (``d < 0``) by ``|d|`` with miter joins.

    Inward offsetting may split or erase the polygon; pieces below ``min_area``
    are dropped.  Output orientation follows the input's.
    """
    p = as_polygon(p, orient_ccw=False)
    if d == 0.0:
        return [p.copy()]
    ccw = signed_area(p) > 0
    grown = _ShapelyPolygon(p).buffer(float(d), join_style="mitre", mitre_limit=miter_limit)
    out = []
    for piece in _components(grown):
        if d < 0 and piece.area < min_area:
            continue
        out.append(_from_shapely(piece, ccw))
    out.sort(key=lambda q: -abs(signed_area(q)))
    return out


@dataclass(frozen=True)
class ShrinkSchedule:
    """Shrink ratio growing linearly from ``r_a`` at epoch 0 to ``r_b`` at ``max_epoch``."""

    r_a: float = 0.4
    r_b: float = 0.6
    max_epoch: int = 1200

    def __post_init__(self):
        for name in ("r_a", "r_b"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ParameterError(f"{name} must lie in (0, 1], got {v}")
        if int(self.max_epoch) != self.max_epoch or self.max_epoch < 1:
            raise ParameterError(f"max_epoch must be a positive integer, got {self.max_epoch}")


def schedule_ratio(s: ShrinkSchedule, epoch) -> float:
    """``r_a + (r_b - r_a) * epoch / max_epoch``, with epoch clamped to ``[0, max_epoch]``."""
    if epoch < 0:
        raise ParameterError(f"epoch must be non-negative, got {epoch}")
    if epoch >= s.max_epoch:
        return s.r_b
    return s.r_a + (s.r_b - s.r_a) * epoch / s.max_epoch


def shrink_for_epoch(p, s: ShrinkSchedule, epoch) -> list:
    r = schedule_ratio(s, epoch)
    return offset_polygon(p, -shrink_offset(p, r))
