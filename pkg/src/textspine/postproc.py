"""Probability map -> text polygons.

Binarize, label 8-connected regions, trace each region's outer boundary,
simplify it with Douglas-Peucker, dilate the resulting spine by
``area / perimeter * d_ts`` and rescale to the original image size.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import GeometryError, ParameterError
from .geometry import area, as_polygon, is_simple, offset_polygon, perimeter, repair_polygon

log = logging.getLogger(__name__)

# clockwise in image coordinates (y down), starting west; entries are (dy, dx)
_MOORE = ((0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1))
_MOORE_INDEX = {d: i for i, d in enumerate(_MOORE)}
_EIGHT = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class DetectParams:
    bin_thresh: float = 0.3
    d_ts: float = 1.5
    min_area: float = 4.0
    approx_eps_frac: float = 0.01
    score_thresh: float = 0.5

    def __post_init__(self):
        for name in ("bin_thresh", "score_thresh"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ParameterError(f"{name} must lie in (0, 1), got {v}")
        for name in ("d_ts", "min_area", "approx_eps_frac"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative, got {getattr(self, name)}")


@dataclass(frozen=True)
class Detection:
    polygon: np.ndarray
    score: float

    def to_json(self) -> dict:
        return {"points": np.asarray(self.polygon).tolist(), "score": float(self.score)}


def _as_map(prob) -> np.ndarray:
    prob = np.asarray(prob, dtype=np.float64)
    if prob.ndim == 4:
        if prob.shape[:2] != (1, 1):
            raise ParameterError(f"expected a single-channel map, got shape {prob.shape}")
        prob = prob[0, 0]
    if prob.ndim != 2:
        raise ParameterError(f"probability map must be 2-D or (1, 1, h, w), got {prob.shape}")
    return prob


def binarize(prob, t: float) -> np.ndarray:
    return _as_map(prob) >= t


def connected_components(mask):
    """8-connected labeling; returns ``(labels, count)`` with labels dense from 1."""
    labels, count = ndimage.label(np.asarray(mask, dtype=bool), structure=_EIGHT)
    return labels, int(count)


def trace_boundary(region) -> np.ndarray:
    """Outer boundary of a boolean region by Moore-neighbour tracing.

    Returns (row, col) pixel indices in traversal order (clockwise on screen),
    starting from the first region pixel in raster order.  The trace stops when
    a (pixel, backtrack) state recurs.
    """
    region = np.asarray(region, dtype=bool)
    if not region.any():
        raise GeometryError("cannot trace an empty region")
    padded = np.pad(region, 1)
    ys, xs = np.nonzero(padded)
    start = (int(ys[0]), int(xs[0]))
    pts = [start]
    seen = {(start, 0): 0}
    p, back = start, 0  # backtrack lies west of the raster-first pixel
    while True:
        for i in range(1, 9):
            d = (back + i) % 8
            q = (p[0] + _MOORE[d][0], p[1] + _MOORE[d][1])
            if padded[q]:
                prev = _MOORE[(d + 7) % 8]
                b = (p[0] + prev[0] - q[0], p[1] + prev[1] - q[1])
                p, back = q, _MOORE_INDEX[b]
                break
        else:
            break  # isolated pixel
        state = (p, back)
        if state in seen:
            pts = pts[seen[state]:len(pts)]
            break
        seen[state] = len(pts)
        pts.append(p)
    return np.asarray(pts, dtype=int) - 1


def douglas_peucker(points, eps: float, closed: bool = True) -> np.ndarray:
    """Simplify a polyline; kept vertices are always a subset of the input."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if eps <= 0 or n < 3:
        return pts.copy()
    if closed:
        far = int(np.argmax(np.hypot(*(pts - pts[0]).T)))
        if far == 0:
            return pts[:1].copy()
        loop = np.vstack([pts, pts[:1]])
        first = _dp_open(loop[:far + 1], eps)
        second = _dp_open(loop[far:], eps)
        idx = np.concatenate([first, far + second[1:-1]])
        return pts[idx]
    return pts[_dp_open(pts, eps)]


def _dp_open(pts: np.ndarray, eps: float) -> np.ndarray:
    keep = np.zeros(len(pts), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(pts) - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        a, b = pts[i], pts[j]
        seg = pts[i + 1:j]
        ab = b - a
        norm = np.hypot(*ab)
        if norm == 0:
            dist = np.hypot(*(seg - a).T)
        else:
            dist = np.abs(ab[0] * (seg[:, 1] - a[1]) - ab[1] * (seg[:, 0] - a[0])) / norm
        k = int(np.argmax(dist))
        if dist[k] > eps:
            m = i + 1 + k
            keep[m] = True
            stack.append((i, m))
            stack.append((m, j))
    return np.nonzero(keep)[0]


def trace_and_approx(region, approx_eps_frac: float = 0.01, origin=(0, 0)):
    """Trace and simplify a region; vertices are pixel centres in (x, y).

    ``origin`` is the (row, col) of ``region[0, 0]`` in the full map.  A
    single-pixel region yields that pixel's unit square.  Returns ``None``
    when the simplified contour has fewer than 3 vertices.
    """
    rc = trace_boundary(region)
    oy, ox = origin
    if len(rc) == 1:
        y, x = rc[0] + (oy, ox)
        return np.array([[x, y], [x + 1, y], [x + 1, y + 1], [x, y + 1]], dtype=np.float64)
    contour = np.column_stack([rc[:, 1] + ox + 0.5, rc[:, 0] + oy + 0.5])
    length = float(np.sum(np.hypot(*(np.roll(contour, -1, axis=0) - contour).T)))
    approx = douglas_peucker(contour, approx_eps_frac * length)
    if len(approx) < 3:
        log.debug("dropping contour with %d vertices after approximation", len(approx))
        return None
    return approx


def dilate_instance(spine, d_ts: float) -> np.ndarray:
    """Grow ``spine`` outward by ``area / perimeter * d_ts``; keep the largest piece."""
    spine = as_polygon(spine)
    if d_ts == 0:
        return spine
    dist = area(spine) / perimeter(spine) * d_ts
    pieces = offset_polygon(spine, dist)
    if not pieces:
        raise GeometryError("dilation produced no polygon")
    return pieces[0]


def detect(prob, params: DetectParams = DetectParams(), orig_w=None, orig_h=None) -> list:
    """Run the full chain on one map and return detections in original-image coordinates."""
    prob = _as_map(prob)
    h, w = prob.shape
    sx = (orig_w if orig_w is not None else w) / w
    sy = (orig_h if orig_h is not None else h) / h
    labels, count = connected_components(binarize(prob, params.bin_thresh))
    detections = []
    for k, sl in enumerate(ndimage.find_objects(labels), 1):
        if sl is None:
            continue
        region = labels[sl] == k
        score = float(prob[sl][region].mean())
        if score < params.score_thresh:
            continue
        spine = trace_and_approx(region, params.approx_eps_frac, (sl[0].start, sl[1].start))
        if spine is None:
            continue
        try:
            spine = as_polygon(spine)
            if not is_simple(spine):
                spine = repair_polygon(spine, warn=False)
            if area(spine) < params.min_area:
                continue
            # centre-traced contours sit half a pixel inside the region's pixel boundary
            spine = offset_polygon(spine, 0.5)[0]
            poly = dilate_instance(spine, params.d_ts)
        except GeometryError as exc:
            log.debug("dropping region %d: %s", k, exc)
            continue
        detections.append(Detection(poly * np.array([sx, sy]), score))
    return detections


def detections_to_json(image_id: str, detections) -> dict:
    return {"image_id": image_id, "detections": [d.to_json() for d in detections]}
