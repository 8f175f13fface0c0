"""Differentiable layer primitives operating on single (C, H, W) images."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatch
from .tensor import Tensor

__all__ = ["conv2d", "conv2d_transpose", "dense", "relu", "leaky_relu", "sigmoid", "concat"]


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (p, p), (p, p)))


def _windows(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    # (C, Ho, Wo, k, k) view of the padded input
    win = sliding_window_view(xp, (k, k), axis=(1, 2))
    return win[:, ::stride, ::stride][:, :ho, :wo]


def _col2im(cols: np.ndarray, hp: int, wp: int, stride: int) -> np.ndarray:
    # cols: (C, k, k, Ho, Wo) -> scatter-add into (C, hp, wp)
    c, k, _, ho, wo = cols.shape
    out = np.zeros((c, hp, wp), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += cols[:, i, j]
    return out


def _check_conv(x: Tensor, w: Tensor, b: Tensor, in_axis: int, out_axis: int):
    if x.ndim != 3 or w.ndim != 4:
        raise ShapeMismatch(f"expected (C,H,W) input and 4D kernels, got {x.shape} and {w.shape}")
    if w.shape[in_axis] != x.shape[0]:
        raise ShapeMismatch(f"kernel expects {w.shape[in_axis]} input channels, input has {x.shape[0]}")
    if w.shape[2] != w.shape[3]:
        raise ShapeMismatch(f"kernels must be square, got {w.shape[2:]}")
    if b.shape != (w.shape[out_axis],):
        raise ShapeMismatch(f"bias shape {b.shape} != ({w.shape[out_axis]},)")


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Zero-padded cross-correlation.

    ``x`` is (C_in, H, W), ``w`` is (C_out, C_in, k, k); output is
    (C_out, H', W') with ``H' = (H + 2*padding - k) // stride + 1``.
    """
    _check_conv(x, w, b, in_axis=1, out_axis=0)
    k = w.shape[2]
    if stride < 1 or padding < 0:
        raise ShapeMismatch("stride must be >= 1 and padding >= 0")
    _, h, wd = x.shape
    if k > h + 2 * padding or k > wd + 2 * padding:
        raise ShapeMismatch(f"kernel {k} larger than padded input {(h, wd)}")
    ho = (h + 2 * padding - k) // stride + 1
    wo = (wd + 2 * padding - k) // stride + 1
    xp = _pad(x.data, padding)
    win = _windows(xp, k, stride, ho, wo)
    out = np.tensordot(w.data, win, axes=([1, 2, 3], [0, 3, 4])) + b.data[:, None, None]
    wdata = w.data

    def back(g):
        gw = np.tensordot(g, win, axes=([1, 2], [1, 2])) if w.requires_grad else None
        gb = g.sum(axis=(1, 2)) if b.requires_grad else None
        gx = None
        if x.requires_grad:
            cols = np.tensordot(wdata, g, axes=([0], [0]))
            gxp = _col2im(cols, xp.shape[1], xp.shape[2], stride)
            gx = gxp[:, padding:padding + h, padding:padding + wd]
        return gx, gw, gb

    return Tensor._make(out, (x, w, b), back, "conv2d")


def conv2d_transpose(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Adjoint of :func:`conv2d` (plus bias).

    ``x`` is (C_in, H, W) and ``w`` is (C_in, C_out, k, k), i.e. the same
    tensor a forward convolution from C_out to C_in channels would use.
    Output size is ``(H - 1) * stride + k - 2 * padding``.
    """
    _check_conv(x, w, b, in_axis=0, out_axis=1)
    k = w.shape[2]
    if stride < 1 or padding < 0:
        raise ShapeMismatch("stride must be >= 1 and padding >= 0")
    _, h, wd = x.shape
    hp = (h - 1) * stride + k
    wp = (wd - 1) * stride + k
    if hp - 2 * padding < 1 or wp - 2 * padding < 1:
        raise ShapeMismatch("padding removes the whole output")
    cols = np.tensordot(w.data, x.data, axes=([0], [0]))
    outp = _col2im(cols, hp, wp, stride)
    out = outp[:, padding:hp - padding, padding:wp - padding] + b.data[:, None, None]
    xdata, wdata = x.data, w.data

    def back(g):
        gp = _pad(g, padding)
        win = _windows(gp, k, stride, h, wd)
        gx = np.tensordot(wdata, win, axes=([1, 2, 3], [0, 3, 4])) if x.requires_grad else None
        gw = np.tensordot(xdata, win, axes=([1, 2], [1, 2])) if w.requires_grad else None
        gb = g.sum(axis=(1, 2)) if b.requires_grad else None
        return gx, gw, gb

    return Tensor._make(out, (x, w, b), back, "conv2d_transpose")


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """``w @ x + b`` for a vector input ``x`` of length n and ``w`` of shape (m, n)."""
    if x.ndim != 1 or w.ndim != 2 or w.shape[1] != x.shape[0] or b.shape != (w.shape[0],):
        raise ShapeMismatch(f"dense shapes incompatible: x{x.shape} w{w.shape} b{b.shape}")
    xd, wd = x.data, w.data

    def back(g):
        return wd.T @ g, np.outer(g, xd), g

    return Tensor._make(wd @ xd + b.data, (x, w, b), back, "dense")


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return Tensor._make(np.where(pos, x.data, 0).astype(x.data.dtype), (x,),
                        lambda g: (g * pos,), "relu")


def leaky_relu(x: Tensor, alpha: float = 0.2) -> Tensor:
    slope = np.where(x.data > 0, 1.0, alpha).astype(x.data.dtype)
    return Tensor._make(x.data * slope, (x,), lambda g: (g * slope,), "leaky_relu")


def sigmoid(x: Tensor) -> Tensor:
    a = x.data
    e = np.exp(-np.abs(a))
    out = np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(a.dtype)
    return Tensor._make(out, (x,), lambda g: (g * out * (1 - out),), "sigmoid")


def concat(a: Tensor, b: Tensor, axis: int = 0) -> Tensor:
    if a.ndim != b.ndim:
        raise ShapeMismatch(f"rank mismatch {a.shape} vs {b.shape}")
    axis = axis % a.ndim
    for i, (m, n) in enumerate(zip(a.shape, b.shape)):
        if i != axis and m != n:
            raise ShapeMismatch(f"shapes {a.shape} and {b.shape} differ off axis {axis}")
    split = a.shape[axis]

    def back(g):
        ga, gb = np.split(g, [split], axis=axis)
        return ga, gb

    return Tensor._make(np.concatenate([a.data, b.data], axis=axis), (a, b), back, "concat")
