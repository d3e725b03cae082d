"""Numeric kernels for the convolutional fire classifier.

Values travel as plain numpy arrays in row-major HWC layout: a color image is
``[h, w, c]`` and a batch is ``[n, h, w, c]``. Every kernel accepts either a
single image or a batch and returns the same rank it was given. float32 is
the working precision, but each function follows the dtype of its inputs, so
casting a network to float64 yields a shadow path for gradient checking.

All functions are pure and deterministic: no internal state, and identical
inputs produce bit-identical outputs. Gradients are hand-derived analytic
forms of the paired forward op, not autodiff.

Convolutions are VALID (no padding) with stride 1; pooling is a 2x2 window
with stride 2, flooring away a trailing odd row/column. These choices are
fixed because the published layer widths only reach the documented parameter
total under them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeMismatchError

__all__ = [
    "ConvParams",
    "DenseParams",
    "PoolIndex",
    "conv2d_forward",
    "conv2d_backward",
    "maxpool2_forward",
    "maxpool2_backward",
    "dense_forward",
    "dense_backward",
    "relu",
    "relu_backward",
    "softmax",
    "cross_entropy",
    "cross_entropy_batch",
]

PROB_FLOOR = 1e-7  # keeps the loss finite on confident wrong predictions


@dataclass
class ConvParams:
    """Convolution weights: kernels ``[kh, kw, c_in, c_out]`` and bias ``[c_out]``."""

    kernels: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.kernels.ndim != 4:
            raise ShapeMismatchError(
                f"conv kernels must be rank 4 [kh, kw, c_in, c_out], got rank {self.kernels.ndim}"
            )
        c_out = self.kernels.shape[3]
        if self.bias.shape != (c_out,):
            raise ShapeMismatchError(
                f"conv bias shape {self.bias.shape} does not match c_out={c_out}"
            )


@dataclass
class DenseParams:
    """Dense weights ``[n_in, n_out]`` and bias ``[n_out]``."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 2:
            raise ShapeMismatchError(
                f"dense weights must be rank 2 [n_in, n_out], got rank {self.weights.ndim}"
            )
        if self.bias.shape != (self.weights.shape[1],):
            raise ShapeMismatchError(
                f"dense bias shape {self.bias.shape} does not match n_out={self.weights.shape[1]}"
            )


@dataclass
class PoolIndex:
    """Argmax map from a pooling forward pass, consumed by the backward pass.

    ``indices`` holds, per output cell, the row-major position (0..3) of the
    winning element inside its 2x2 window. ``in_h``/``in_w`` remember the
    original spatial extent so gradients for a floored odd row/column can be
    restored as zeros.
    """

    indices: np.ndarray
    in_h: int
    in_w: int


def _as_batch(x: np.ndarray, op: str) -> tuple[np.ndarray, bool]:
    # rank 3 = single image, rank 4 = batch
    if x.ndim == 3:
        return x[None, ...], True
    if x.ndim == 4:
        return x, False
    raise ShapeMismatchError(f"{op} expects rank 3 [h,w,c] or rank 4 [n,h,w,c], got rank {x.ndim}")


def _conv_cols(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """im2col: [n,h,w,c] -> [n, oh, ow, kh*kw*c] with patch order (dy, dx, c)."""
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))  # [n, oh, ow, c, kh, kw]
    n, oh, ow = win.shape[:3]
    cols = win.transpose(0, 1, 2, 4, 5, 3)  # [n, oh, ow, kh, kw, c]
    return np.ascontiguousarray(cols).reshape(n, oh, ow, kh * kw * x.shape[3])


def conv2d_forward(x: np.ndarray, params: ConvParams) -> np.ndarray:
    """VALID cross-correlation, stride 1.

    out[y, x, o] = bias[o] + sum_{dy,dx,i} in[y+dy, x+dx, i] * kernels[dy,dx,i,o]
    """
    xb, single = _as_batch(x, "conv2d_forward")
    kh, kw, c_in, c_out = params.kernels.shape
    n, h, w, c = xb.shape
    if c != c_in:
        raise ShapeMismatchError(f"conv2d input has {c} channels but kernels expect c_in={c_in}")
    if h < kh or w < kw:
        raise ShapeMismatchError(f"conv2d input {h}x{w} is smaller than the {kh}x{kw} kernel")
    cols = _conv_cols(xb, kh, kw)
    kmat = params.kernels.reshape(kh * kw * c_in, c_out)
    out = cols @ kmat + params.bias
    return out[0] if single else out


def conv2d_backward(
    x: np.ndarray, params: ConvParams, grad_out: np.ndarray
) -> tuple[np.ndarray, ConvParams]:
    """Analytic gradients of conv2d_forward w.r.t. input, kernels and bias."""
    xb, single = _as_batch(x, "conv2d_backward")
    gb, gsingle = _as_batch(grad_out, "conv2d_backward")
    if single != gsingle:
        raise ShapeMismatchError("conv2d_backward input and grad_out have different ranks")
    kh, kw, c_in, c_out = params.kernels.shape
    n, h, w, c = xb.shape
    oh, ow = h - kh + 1, w - kw + 1
    if gb.shape != (n, oh, ow, c_out):
        raise ShapeMismatchError(
            f"conv2d grad_out shape {gb.shape[1:] if single else gb.shape} does not match "
            f"forward output ({oh}, {ow}, {c_out})"
        )

    go_flat = gb.reshape(n * oh * ow, c_out)
    cols = _conv_cols(xb, kh, kw).reshape(n * oh * ow, kh * kw * c_in)
    grad_kernels = (cols.T @ go_flat).reshape(kh, kw, c_in, c_out)
    grad_bias = go_flat.sum(axis=0)

    # grad wrt input: full correlation = VALID conv of the padded grad_out
    # with spatially flipped, channel-transposed kernels
    padded = np.zeros((n, oh + 2 * (kh - 1), ow + 2 * (kw - 1), c_out), dtype=gb.dtype)
    padded[:, kh - 1 : kh - 1 + oh, kw - 1 : kw - 1 + ow, :] = gb
    flipped = params.kernels[::-1, ::-1].transpose(0, 1, 3, 2)  # [kh, kw, c_out, c_in]
    gcols = _conv_cols(padded, kh, kw)
    grad_input = gcols @ flipped.reshape(kh * kw * c_out, c_in)

    if single:
        grad_input = grad_input[0]
    return grad_input, ConvParams(grad_kernels, grad_bias)


def maxpool2_forward(x: np.ndarray) -> tuple[np.ndarray, PoolIndex]:
    """2x2 max pooling with stride 2; trailing odd row/column is dropped.

    Ties inside a window resolve to the first element in row-major order.
    """
    xb, single = _as_batch(x, "maxpool2_forward")
    n, h, w, c = xb.shape
    if h < 2 or w < 2:
        raise ShapeMismatchError(f"maxpool2 needs at least 2x2 input, got {h}x{w}")
    oh, ow = h // 2, w // 2
    wins = xb[:, : oh * 2, : ow * 2, :].reshape(n, oh, 2, ow, 2, c)
    wins = wins.transpose(0, 1, 3, 5, 2, 4).reshape(n, oh, ow, c, 4)
    idx = wins.argmax(axis=-1)  # first occurrence wins ties
    out = np.take_along_axis(wins, idx[..., None], axis=-1)[..., 0]
    indices = idx.astype(np.uint8)
    if single:
        out, indices = out[0], indices[0]
    return out, PoolIndex(indices, h, w)


def maxpool2_backward(index: PoolIndex, grad_out: np.ndarray) -> np.ndarray:
    """Routes each grad_out value to its argmax position; everything else is zero."""
    gb, single = _as_batch(grad_out, "maxpool2_backward")
    idx, isingle = _as_batch(index.indices, "maxpool2_backward")
    if single != isingle or gb.shape != idx.shape:
        raise ShapeMismatchError(
            f"maxpool2 grad_out shape {grad_out.shape} does not match argmax map "
            f"shape {index.indices.shape}"
        )
    n, oh, ow, c = gb.shape
    if index.in_h // 2 != oh or index.in_w // 2 != ow:
        raise ShapeMismatchError(
            f"argmax map claims input {index.in_h}x{index.in_w}, inconsistent with "
            f"grad_out {oh}x{ow}"
        )
    buf = np.zeros((n, oh, ow, c, 4), dtype=gb.dtype)
    np.put_along_axis(buf, idx[..., None].astype(np.intp), gb[..., None], axis=-1)
    grad = buf.reshape(n, oh, ow, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    grad = grad.reshape(n, oh * 2, ow * 2, c)
    if index.in_h != oh * 2 or index.in_w != ow * 2:
        full = np.zeros((n, index.in_h, index.in_w, c), dtype=gb.dtype)
        full[:, : oh * 2, : ow * 2, :] = grad
        grad = full
    return grad[0] if single else grad


def dense_forward(x: np.ndarray, params: DenseParams) -> np.ndarray:
    """out = x @ weights + bias, for a single vector [n_in] or a batch [n, n_in]."""
    n_in, n_out = params.weights.shape
    if x.ndim not in (1, 2) or x.shape[-1] != n_in:
        raise ShapeMismatchError(
            f"dense input has width {x.shape[-1] if x.ndim else 0}, weights expect n_in={n_in}"
        )
    return x @ params.weights + params.bias


def dense_backward(
    x: np.ndarray, params: DenseParams, grad_out: np.ndarray
) -> tuple[np.ndarray, DenseParams]:
    """Analytic gradients of dense_forward w.r.t. input, weights and bias."""
    n_in, n_out = params.weights.shape
    if x.shape[-1] != n_in or grad_out.shape[-1] != n_out or x.ndim != grad_out.ndim:
        raise ShapeMismatchError(
            f"dense_backward shapes disagree: input {x.shape}, grad_out {grad_out.shape}, "
            f"weights ({n_in}, {n_out})"
        )
    x2 = x if x.ndim == 2 else x[None, :]
    g2 = grad_out if grad_out.ndim == 2 else grad_out[None, :]
    grad_weights = x2.T @ g2
    grad_bias = g2.sum(axis=0)
    grad_input = grad_out @ params.weights.T
    return grad_input, DenseParams(grad_weights, grad_bias)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Gate is 1 where x > 0, else 0 (subgradient at exactly 0 is 0)."""
    if x.shape != grad_out.shape:
        raise ShapeMismatchError(
            f"relu_backward input shape {x.shape} does not match grad_out {grad_out.shape}"
        )
    return grad_out * (x > 0)


def softmax(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for overflow safety."""
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, target: int) -> tuple[float, np.ndarray]:
    """Loss and fused gradient w.r.t. pre-softmax logits for one sample.

    loss = -ln(clamp(probs[target])); grad = probs - onehot(target).
    """
    if probs.ndim != 1:
        raise ShapeMismatchError(f"cross_entropy expects a rank-1 probability vector, got rank {probs.ndim}")
    k = probs.shape[0]
    if not 0 <= target < k:
        raise IndexError(f"target {target} out of range for {k} classes")
    loss = -float(np.log(np.clip(probs[target], PROB_FLOOR, 1.0)))
    grad = probs.copy()
    grad[target] -= 1
    return loss, grad


def cross_entropy_batch(probs: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean loss over a batch plus the gradient w.r.t. the logits of that mean."""
    if probs.ndim != 2:
        raise ShapeMismatchError(f"cross_entropy_batch expects [n, k] probabilities, got rank {probs.ndim}")
    n, k = probs.shape
    targets = np.asarray(targets)
    if targets.shape != (n,):
        raise ShapeMismatchError(f"targets shape {targets.shape} does not match batch size {n}")
    if targets.min() < 0 or targets.max() >= k:
        raise IndexError(f"targets must lie in [0, {k})")
    picked = probs[np.arange(n), targets]
    loss = -float(np.log(np.clip(picked, PROB_FLOOR, 1.0)).mean())
    grad = probs.copy()
    grad[np.arange(n), targets] -= 1
    grad /= n
    return loss, grad
