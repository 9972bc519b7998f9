"""Text-spine training targets and the segmentation losses compared against each other."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, ParameterError, ShapeError
from .geometry import ShrinkSchedule, as_polygon, shrink_for_epoch

log = logging.getLogger(__name__)

EPS = 1e-7
NEG_RATIO = 3
NO_POSITIVE_CAP = 1000


@dataclass(frozen=True)
class LabelMask:
    """Positive mask and ignore mask, both (1, 1, h, w) with values in {0, 1}."""

    mask: np.ndarray
    ignore: np.ndarray

    @classmethod
    def empty(cls, h: int, w: int) -> "LabelMask":
        return cls(np.zeros((1, 1, h, w)), np.zeros((1, 1, h, w)))

    @property
    def n_pos(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class LossReport:
    total: float
    n_pos: int
    n_neg_selected: int


def rasterize_mask(polygons, h: int, w: int) -> np.ndarray:
    """Boolean (h, w) mask of pixels whose centre (x + 0.5, y + 0.5) lies in any polygon.

    Each polygon uses the even-odd rule; polygons are unioned.
    """
    out = np.zeros((h, w), dtype=bool)
    for poly in polygons:
        p = np.asarray(poly, dtype=np.float64)
        x0 = max(int(np.floor(p[:, 0].min() - 0.5)), 0)
        x1 = min(int(np.ceil(p[:, 0].max() - 0.5)) + 1, w)
        y0 = max(int(np.floor(p[:, 1].min() - 0.5)), 0)
        y1 = min(int(np.ceil(p[:, 1].max() - 0.5)) + 1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        px = np.arange(x0, x1) + 0.5
        py = (np.arange(y0, y1) + 0.5)[:, None]
        inside = np.zeros((y1 - y0, x1 - x0), dtype=bool)
        q = np.roll(p, -1, axis=0)
        for (xa, ya), (xb, yb) in zip(p, q):
            if ya == yb:
                continue
            crosses = (ya > py) != (yb > py)
            xint = xa + (py - ya) * (xb - xa) / (yb - ya)
            inside ^= crosses & (px < xint)
        out[y0:y1, x0:x1] |= inside
    return out


def rasterize(polygons, h: int, w: int) -> LabelMask:
    m = rasterize_mask(polygons, h, w).astype(np.float64)[None, None]
    return LabelMask(m, np.zeros_like(m))


def make_training_target(annotations, schedule: ShrinkSchedule, epoch, h: int, w: int) -> LabelMask:
    """Shrink every cared-for instance for ``epoch`` and rasterize.

    ``annotations`` holds polygons or objects with ``points``/``ignore``.
    Ignored instances go, unshrunk, into the ignore channel, which wins over
    the positive channel.
    """
    spines, ignored = [], []
    for k, ann in enumerate(annotations):
        points = getattr(ann, "points", ann)
        if getattr(ann, "ignore", False):
            ignored.append(np.asarray(points, dtype=np.float64))
            continue
        try:
            spines.extend(shrink_for_epoch(as_polygon(points), schedule, epoch))
        except GeometryError as exc:
            log.warning("skipping annotation %d: %s", k, exc)
    mask = rasterize_mask(spines, h, w)
    ignore = rasterize_mask(ignored, h, w)
    mask &= ~ignore
    return LabelMask(mask.astype(np.float64)[None, None], ignore.astype(np.float64)[None, None])


def _split(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    if isinstance(target, LabelMask):
        y, ign = np.asarray(target.mask, dtype=np.float64), np.asarray(target.ignore) > 0.5
    else:
        y = np.asarray(target, dtype=np.float64)
        ign = np.zeros(y.shape, dtype=bool)
    if pred.shape != y.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {y.shape}")
    return pred, y, ign


def _pixel_bce(x, y):
    x = np.clip(x, EPS, 1.0 - EPS)
    return -(y * np.log(x) + (1.0 - y) * np.log(1.0 - x))


def bce_loss(pred, target) -> LossReport:
    """Mean binary cross-entropy over non-ignored pixels."""
    pred, y, ign = _split(pred, target)
    care = ~ign
    losses = _pixel_bce(pred[care], y[care])
    n_pos = int((y[care] > 0.5).sum())
    total = float(losses.mean()) if losses.size else 0.0
    return LossReport(total, n_pos, int(losses.size) - n_pos)


def bce_loss_backward(pred, target) -> np.ndarray:
    """Gradient of ``bce_loss(pred, target).total`` w.r.t. ``pred``."""
    pred, y, ign = _split(pred, target)
    care = ~ign
    count = int(care.sum())
    g = np.zeros_like(pred)
    if count == 0:
        return g
    inside = care & (pred > EPS) & (pred < 1.0 - EPS)
    x = pred[inside]
    g[inside] = (-y[inside] / x + (1.0 - y[inside]) / (1.0 - x)) / count
    return g


def select_hard_negatives(neg_losses: np.ndarray, n_pos: int) -> np.ndarray:
    """Indices of the highest-loss negatives; ties broken by ascending index."""
    n_neg = neg_losses.size
    k = min(NEG_RATIO * n_pos, n_neg) if n_pos > 0 else min(n_neg, NO_POSITIVE_CAP)
    order = np.argsort(-neg_losses, kind="stable")
    return order[:k]


def bce_ohem_loss(pred, target) -> LossReport:
    """BCE over all positives plus the hardest ``3 * n_pos`` negatives."""
    pred, y, ign = _split(pred, target)
    care = ~ign
    x, t = pred[care], y[care]
    losses = _pixel_bce(x, t)
    pos = t > 0.5
    pos_losses, neg_losses = losses[pos], losses[~pos]
    chosen = neg_losses[select_hard_negatives(neg_losses, int(pos.sum()))]
    count = pos_losses.size + chosen.size
    total = float((pos_losses.sum() + chosen.sum()) / count) if count else 0.0
    return LossReport(total, int(pos.sum()), int(chosen.size))


def focal_loss(pred, target, gamma: float = 2.0, alpha: float = 0.25) -> LossReport:
    if gamma < 0:
        raise ParameterError(f"gamma must be non-negative, got {gamma}")
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    pred, y, ign = _split(pred, target)
    care = ~ign
    x = np.clip(pred[care], EPS, 1.0 - EPS)
    t = y[care]
    losses = -(alpha * t * (1.0 - x) ** gamma * np.log(x)
               + (1.0 - alpha) * (1.0 - t) * x ** gamma * np.log(1.0 - x))
    n_pos = int((t > 0.5).sum())
    total = float(losses.mean()) if losses.size else 0.0
    return LossReport(total, n_pos, int(losses.size) - n_pos)
