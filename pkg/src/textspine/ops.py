"""Forward/backward primitives on (n, c, h, w) float64 grids.

Every ``*_backward`` takes the cotangent of the forward output plus whatever the
forward consumed and returns cotangents of the forward inputs.  Nothing here
keeps state; callers own their gradient accumulators.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .errors import ParameterError, ShapeError
from .grid import as_grid


def _check_rate(r) -> int:
    if int(r) != r or r < 1:
        raise ParameterError(f"upsample rate must be a positive integer, got {r!r}")
    return int(r)


# ---------------------------------------------------------------------------
# 3x3 convolution, stride 1, zero padding 1
# ---------------------------------------------------------------------------

def _check_conv(x, weights, bias):
    x = as_grid(x)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 4 or weights.shape[2:] != (3, 3):
        raise ShapeError(f"conv3x3 weights must be (C_out, C_in, 3, 3), got {weights.shape}")
    if weights.shape[1] != x.shape[1]:
        raise ShapeError(f"input has {x.shape[1]} channels, weights expect {weights.shape[1]}")
    if bias is None:
        bias = np.zeros(weights.shape[0])
    bias = np.asarray(bias, dtype=np.float64).reshape(-1)
    if bias.shape[0] != weights.shape[0]:
        raise ShapeError(f"bias length {bias.shape[0]} != output channels {weights.shape[0]}")
    return x, weights, bias


def conv3x3_forward(x, weights, bias=None) -> np.ndarray:
    """Cross-correlation with a 3x3 kernel; output has the input's spatial size."""
    x, weights, bias = _check_conv(x, weights, bias)
    n, _, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (n, c, h, w, 3, 3)
    out = np.tensordot(cols, weights, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out += bias[None, :, None, None]
    return out


def conv3x3_backward(grad_out, x, weights):
    """Return ``(grad_input, grad_weights, grad_bias)``."""
    x, weights, _ = _check_conv(x, weights, None)
    grad_out = as_grid(grad_out, "grad_out")
    n, _, h, w = x.shape
    if grad_out.shape != (n, weights.shape[0], h, w):
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match forward output "
                         f"{(n, weights.shape[0], h, w)}")
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = sliding_window_view(xp, (3, 3), axis=(2, 3))
    gw = np.tensordot(grad_out, cols, axes=([0, 2, 3], [0, 2, 3]))
    gxp = np.zeros_like(xp)
    for ky in range(3):
        for kx in range(3):
            gxp[:, :, ky:ky + h, kx:kx + w] += np.tensordot(
                weights[:, :, ky, kx], grad_out, axes=([0], [1])).transpose(1, 0, 2, 3)
    gb = grad_out.sum(axis=(0, 2, 3))
    return gxp[:, :, 1:-1, 1:-1].copy(), gw, gb


# ---------------------------------------------------------------------------
# Nearest and bilinear upsampling
# ---------------------------------------------------------------------------

def nearest_upsample(x, r) -> np.ndarray:
    r = _check_rate(r)
    x = as_grid(x)
    return np.repeat(np.repeat(x, r, axis=2), r, axis=3)


def nearest_upsample_backward(grad_out, r) -> np.ndarray:
    """Sum each r x r output block back onto its source cell."""
    r = _check_rate(r)
    g = as_grid(grad_out, "grad_out")
    n, c, H, W = g.shape
    if H % r or W % r:
        raise ShapeError(f"grad_out extents {(H, W)} not divisible by rate {r}")
    return g.reshape(n, c, H // r, r, W // r, r).sum(axis=(3, 5))


def _bilinear_matrix(size: int, r: int) -> np.ndarray:
    # align_corners=False: src = (dst + 0.5) / r - 0.5, clamped to [0, size - 1]
    dst = np.arange(size * r)
    src = np.clip((dst + 0.5) / r - 0.5, 0.0, size - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, size - 1)
    lam = src - i0
    m = np.zeros((size * r, size))
    np.add.at(m, (dst, i0), 1.0 - lam)
    np.add.at(m, (dst, i1), lam)
    return m


def bilinear_upsample(x, r) -> np.ndarray:
    r = _check_rate(r)
    x = as_grid(x)
    my = _bilinear_matrix(x.shape[2], r)
    mx = _bilinear_matrix(x.shape[3], r)
    return my @ x @ mx.T


def bilinear_upsample_backward(grad_out, r) -> np.ndarray:
    r = _check_rate(r)
    g = as_grid(grad_out, "grad_out")
    H, W = g.shape[2:]
    if H % r or W % r:
        raise ShapeError(f"grad_out extents {(H, W)} not divisible by rate {r}")
    my = _bilinear_matrix(H // r, r)
    mx = _bilinear_matrix(W // r, r)
    return my.T @ g @ mx


# ---------------------------------------------------------------------------
# Channel softmax and sigmoid
# ---------------------------------------------------------------------------

def channel_softmax(x) -> np.ndarray:
    x = as_grid(x)
    if x.shape[1] < 1:
        raise ShapeError("softmax needs at least one channel")
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def channel_softmax_backward(grad_out, y) -> np.ndarray:
    """Backward given the forward *output* ``y``."""
    g = as_grid(grad_out, "grad_out")
    return y * (g - (g * y).sum(axis=1, keepdims=True))


def sigmoid(x) -> np.ndarray:
    return expit(np.asarray(x, dtype=np.float64))


def sigmoid_backward(grad_out, y) -> np.ndarray:
    return grad_out * y * (1.0 - y)


# ---------------------------------------------------------------------------
# Transposed convolution (kernel 2r, stride r) and pixel shuffle
# ---------------------------------------------------------------------------

def _check_deconv(x, weights, r):
    r = _check_rate(r)
    x = as_grid(x)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 4 or weights.shape[2:] != (2 * r, 2 * r):
        raise ShapeError(f"deconv weights must be (C_in, C_out, {2 * r}, {2 * r}), got {weights.shape}")
    if weights.shape[0] != x.shape[1]:
        raise ShapeError(f"input has {x.shape[1]} channels, weights expect {weights.shape[0]}")
    return x, weights, r


def deconv_upsample(x, weights, r, bias=None) -> np.ndarray:
    """Transposed convolution, kernel 2r x 2r, stride r, cropped to (r*h, r*w).

    The uncropped output is (h + 1) * r tall; ``r // 2`` rows/cols are trimmed
    from the leading edge.
    """
    x, weights, r = _check_deconv(x, weights, r)
    n, _, h, w = x.shape
    c_out = weights.shape[1]
    full = np.zeros((n, c_out, (h + 1) * r, (w + 1) * r))
    for ky in range(2 * r):
        for kx in range(2 * r):
            full[:, :, ky:ky + r * h:r, kx:kx + r * w:r] += np.einsum(
                "nchw,co->nohw", x, weights[:, :, ky, kx])
    s = r // 2
    out = full[:, :, s:s + r * h, s:s + r * w].copy()
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64).reshape(1, -1, 1, 1)
    return out


def deconv_upsample_backward(grad_out, x, weights, r):
    """Return ``(grad_input, grad_weights, grad_bias)``."""
    x, weights, r = _check_deconv(x, weights, r)
    n, _, h, w = x.shape
    c_out = weights.shape[1]
    g = as_grid(grad_out, "grad_out")
    if g.shape != (n, c_out, r * h, r * w):
        raise ShapeError(f"grad_out shape {g.shape} does not match {(n, c_out, r * h, r * w)}")
    s = r // 2
    gfull = np.zeros((n, c_out, (h + 1) * r, (w + 1) * r))
    gfull[:, :, s:s + r * h, s:s + r * w] = g
    gx = np.zeros_like(x)
    gw = np.zeros_like(weights)
    for ky in range(2 * r):
        for kx in range(2 * r):
            gs = gfull[:, :, ky:ky + r * h:r, kx:kx + r * w:r]
            gx += np.einsum("nohw,co->nchw", gs, weights[:, :, ky, kx])
            gw[:, :, ky, kx] = np.einsum("nchw,nohw->co", x, gs)
    return gx, gw, g.sum(axis=(0, 2, 3))


def pixel_shuffle(x, r) -> np.ndarray:
    """(n, c*r*r, h, w) -> (n, c, r*h, r*w); channel ``c*r*r + i*r + j`` lands at offset (i, j)."""
    r = _check_rate(r)
    x = as_grid(x)
    n, cr2, h, w = x.shape
    if cr2 % (r * r):
        raise ShapeError(f"pixel_shuffle needs channels divisible by {r * r}, got {cr2}")
    c = cr2 // (r * r)
    return x.reshape(n, c, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, h * r, w * r)


def pixel_shuffle_backward(grad_out, r) -> np.ndarray:
    r = _check_rate(r)
    g = as_grid(grad_out, "grad_out")
    n, c, H, W = g.shape
    if H % r or W % r:
        raise ShapeError(f"grad_out extents {(H, W)} not divisible by rate {r}")
    h, w = H // r, W // r
    return g.reshape(n, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * r * r, h, w)
