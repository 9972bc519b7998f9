"""IoU-matched precision / recall / F-measure for polygon detections."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import shapely
from shapely.geometry import Polygon as _ShapelyPolygon

from .errors import FormatError


def _shape(p):
    try:
        pts = np.asarray(p, dtype=np.float64)
        if pts.ndim != 2 or len(pts) < 3:
            return None
        poly = _ShapelyPolygon(pts)
        if not poly.is_valid:
            poly = shapely.make_valid(poly)
        return poly if poly.area > 0 else None
    except (ValueError, shapely.errors.GEOSException):
        return None


def polygon_iou(a, b) -> float:
    """Intersection over union; 0 for degenerate input."""
    pa, pb = _shape(a), _shape(b)
    if pa is None or pb is None:
        return 0.0
    inter = pa.intersection(pb).area
    union = pa.area + pb.area - inter
    return float(inter / union) if union > 0 else 0.0


def prf(tp: int, fp: int, fn: int):
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


@dataclass
class MatchResult:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    pairs: list = field(default_factory=list)  # (det index, gt index, iou)
    image_id: str = ""

    @property
    def precision(self) -> float:
        return prf(self.tp, self.fp, self.fn)[0]

    @property
    def recall(self) -> float:
        return prf(self.tp, self.fp, self.fn)[1]

    @property
    def f_measure(self) -> float:
        return prf(self.tp, self.fp, self.fn)[2]

    def to_json(self) -> dict:
        return {
            "image_id": self.image_id,
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "precision": self.precision, "recall": self.recall, "f_measure": self.f_measure,
            "pairs": [[int(i), int(j), float(v)] for i, j, v in self.pairs],
        }


def _points(obj):
    if hasattr(obj, "polygon"):
        return obj.polygon
    if hasattr(obj, "points"):
        return obj.points
    if isinstance(obj, dict):
        return obj["points"]
    return obj


def match(dets, gts, iou_thresh: float = 0.5, image_id: str = "") -> MatchResult:
    """Greedy one-to-one matching by descending IoU.

    ``gts`` items may carry an ``ignore`` flag (attribute or dict key).  A
    detection paired with, or overlapping at ``iou_thresh``, an ignored truth
    counts as neither TP nor FP.
    """
    det_pts = [_points(d) for d in dets]
    gt_pts = [_points(g) for g in gts]
    ignore = [bool(g.get("ignore", False) if isinstance(g, dict) else getattr(g, "ignore", False))
              for g in gts]
    iou = np.zeros((len(det_pts), len(gt_pts)))
    for i, d in enumerate(det_pts):
        for j, g in enumerate(gt_pts):
            iou[i, j] = polygon_iou(d, g)
    cand = [(iou[i, j], i, j) for i in range(len(det_pts)) for j in range(len(gt_pts))
            if iou[i, j] >= iou_thresh]
    cand.sort(key=lambda t: (-t[0], t[1], t[2]))
    det_used, gt_used = set(), set()
    result = MatchResult(image_id=image_id)
    for v, i, j in cand:
        if i in det_used or j in gt_used:
            continue
        det_used.add(i)
        gt_used.add(j)
        if not ignore[j]:
            result.tp += 1
            result.pairs.append((i, j, float(v)))
    for i in range(len(det_pts)):
        if i in det_used:
            continue
        if any(ignore[j] and iou[i, j] >= iou_thresh for j in range(len(gt_pts))):
            continue
        result.fp += 1
    result.fn = sum(1 for j in range(len(gt_pts)) if not ignore[j] and j not in gt_used)
    return result


def aggregate(per_image) -> MatchResult:
    """Micro-average: sum counts over images, then recompute P/R/F."""
    total = MatchResult(image_id="all")
    for m in per_image:
        total.tp += m.tp
        total.fp += m.fp
        total.fn += m.fn
    return total


def metrics_json(per_image) -> dict:
    per_image = list(per_image)
    total = aggregate(per_image)
    return {
        "precision": total.precision,
        "recall": total.recall,
        "f_measure": total.f_measure,
        "tp": total.tp, "fp": total.fp, "fn": total.fn,
        "per_image": [m.to_json() for m in per_image],
    }


def load_detections(path) -> dict:
    """Read detection JSON (one object or a list of them) into ``{image_id: [det, ...]}``."""
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read detections {path}: {exc}") from exc
    items = obj if isinstance(obj, list) else [obj]
    out = {}
    for item in items:
        try:
            out[str(item["image_id"])] = list(item["detections"])
        except (KeyError, TypeError) as exc:
            raise FormatError(f"{path}: detection entries need image_id and detections") from exc
    return out


def format_table(per_image) -> str:
    per_image = list(per_image)
    rows = [("image", "TP", "FP", "FN", "Precision", "Recall", "F-measure")]
    for m in per_image + [aggregate(per_image)]:
        rows.append((m.image_id, str(m.tp), str(m.fp), str(m.fn),
                     f"{m.precision:.4f}", f"{m.recall:.4f}", f"{m.f_measure:.4f}"))
    widths = [max(len(r[k]) for r in rows) for k in range(len(rows[0]))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    lines.insert(len(lines) - 1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
