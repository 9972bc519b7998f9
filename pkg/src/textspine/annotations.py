"""Text-instance annotations: canonical JSON and CTW1500-style text files."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, GeometryError
from .geometry import as_polygon, repair_polygon

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Instance:
    points: np.ndarray
    ignore: bool = False


@dataclass(frozen=True)
class ImageAnnotation:
    image_id: str
    width: int
    height: int
    instances: tuple

    def to_json(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "instances": [
                {"points": np.asarray(i.points).tolist(), "ignore": bool(i.ignore)}
                for i in self.instances
            ],
        }


def _instance(points, ignore: bool) -> Instance:
    poly = repair_polygon(as_polygon(points))
    return Instance(poly, bool(ignore))


def parse_annotation(obj: dict, image_id: str = "") -> ImageAnnotation:
    try:
        width, height = int(obj["width"]), int(obj["height"])
        raw = obj["instances"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"annotation {image_id!r} is missing width/height/instances") from exc
    instances = []
    for k, inst in enumerate(raw):
        try:
            instances.append(_instance(inst["points"], inst.get("ignore", False)))
        except GeometryError as exc:
            log.warning("%s: skipping instance %d: %s", image_id, k, exc)
    return ImageAnnotation(image_id, width, height, tuple(instances))


def parse_ctw1500_line(line: str):
    """One instance per line; returns ``(points, ignore)`` or ``None`` for blank lines.

    Accepted layouts: 28 absolute integers (14 points); the official 32-integer
    layout (bounding box followed by 14 offsets from its top-left corner); or any
    even count >= 6 of absolute coordinates.  A trailing non-numeric field is
    treated as transcription, and ``###`` marks the instance as ignored.
    """
    line = line.strip().lstrip("﻿")
    if not line:
        return None
    fields = [f.strip() for f in line.split(",")]
    ignore = False
    try:
        values = [float(f) for f in fields]
    except ValueError:
        if len(fields) < 2:
            raise FormatError(f"cannot parse annotation line {line!r}")
        ignore = "###" in ",".join(fields[-1:])
        *numeric, _ = fields
        # transcriptions may themselves contain commas: take the longest numeric prefix
        values = []
        for f in numeric:
            try:
                values.append(float(f))
            except ValueError:
                break
    if len(values) == 32:
        x0, y0 = values[0], values[1]
        offs = np.asarray(values[4:], dtype=np.float64).reshape(14, 2)
        pts = offs + np.array([x0, y0])
    elif len(values) >= 6 and len(values) % 2 == 0:
        pts = np.asarray(values, dtype=np.float64).reshape(-1, 2)
    else:
        raise FormatError(f"expected an even number (>= 6) of coordinates, got {len(values)}")
    return pts, ignore


def load_ctw1500(path, width: int | None = None, height: int | None = None) -> ImageAnnotation:
    """Read a CTW1500-style text file; image size defaults to the polygons' extent."""
    path = Path(path)
    instances = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        parsed = parse_ctw1500_line(line)
        if parsed is None:
            continue
        try:
            instances.append(_instance(*parsed))
        except GeometryError as exc:
            log.warning("%s:%d: skipping instance: %s", path, lineno, exc)
    if width is None or height is None:
        allpts = np.concatenate([i.points for i in instances]) if instances else np.zeros((1, 2))
        width = width or int(np.ceil(allpts[:, 0].max())) + 1
        height = height or int(np.ceil(allpts[:, 1].max())) + 1
    return ImageAnnotation(path.stem, int(width), int(height), tuple(instances))


def load_annotation(path, width: int | None = None, height: int | None = None) -> ImageAnnotation:
    """Load canonical ``.json`` or CTW1500-style ``.txt`` by extension."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON: {exc}") from exc
        return parse_annotation(obj, path.stem)
    if path.suffix.lower() == ".txt":
        return load_ctw1500(path, width, height)
    raise FormatError(f"{path}: unsupported annotation extension {path.suffix!r}")


def annotation_files(path) -> list:
    path = Path(path)
    if path.is_file():
        return [path]
    return sorted(p for p in path.iterdir() if p.suffix.lower() in (".json", ".txt"))
