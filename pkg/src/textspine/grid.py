"""Dense (n, c, h, w) float64 grids, their GRD1 binary container, and seeded init.

A grid is a plain ``numpy.ndarray`` of dtype float64 and rank 4.  Operators in
:mod:`textspine.ops` accept anything array-like and return fresh arrays.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError

MAGIC = b"GRD1"
_HEADER = struct.Struct("<4s4I")


def as_grid(x, name: str = "input") -> np.ndarray:
    """Return ``x`` as a contiguous float64 rank-4 array."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 4:
        raise ShapeError(f"{name} must be rank 4 (n, c, h, w), got shape {arr.shape}")
    return arr


@dataclass
class DualGrid:
    """A grid value paired with an accumulated cotangent of the same shape."""

    value: np.ndarray
    grad: np.ndarray = field(default=None)

    def __post_init__(self):
        self.value = as_grid(self.value, "value")
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        elif self.grad.shape != self.value.shape:
            raise ShapeError(f"grad shape {self.grad.shape} != value shape {self.value.shape}")

    def accumulate(self, g) -> None:
        g = np.asarray(g, dtype=np.float64)
        if g.shape != self.value.shape:
            raise ShapeError(f"cannot accumulate {g.shape} into {self.value.shape}")
        self.grad += g

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


def uniform_init(shape, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform weights in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    s = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-s, s, size=shape)


def encode_grd1(grid) -> bytes:
    arr = as_grid(grid)
    n, c, h, w = arr.shape
    return _HEADER.pack(MAGIC, n, c, h, w) + arr.astype("<f8").tobytes(order="C")


def decode_grd1(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise FormatError("GRD1 buffer shorter than its header")
    magic, n, c, h, w = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    count = n * c * h * w
    expected = _HEADER.size + 8 * count
    if len(buf) != expected:
        raise FormatError(f"GRD1 payload is {len(buf)} bytes, expected {expected}")
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=_HEADER.size)
    return data.astype(np.float64).reshape(n, c, h, w)


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write via a sibling temp file and rename, so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    atomic_write_bytes(path, text.encode("utf-8"))


def save_grd1(path, grid) -> None:
    atomic_write_bytes(path, encode_grd1(grid))


def load_grd1(path) -> np.ndarray:
    return decode_grd1(Path(path).read_bytes())
