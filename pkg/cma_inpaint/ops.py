# -*- coding: utf-8 -*-

"""
Differentiable primitive operations.

Every op takes Tensors (Python/numpy values are promoted to constant
tensors), computes its forward result with numpy and records a backward
rule. Broadcasting follows numpy; gradients are summed back to input
shapes by the tape.

Conventions:
    - conv2d is cross-correlation (kernel not flipped), NCHW layout;
      a 3-D input (C×H×W) is treated as a batch of one
    - softmax is stabilized by max-subtraction
    - cosine similarity clamps row norms at NUMERIC_EPS
"""

from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from cma_inpaint.config import NUMERIC_EPS
from cma_inpaint.exceptions import DimensionError
from cma_inpaint.tensor import Tensor, as_tensor

Axis = Union[None, int, Tuple[int, ...]]

_SQRT_HALF = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def _normalize_axes(axis: Axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


# ==================================================================================================
# Elementwise arithmetic
# ==================================================================================================

def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return Tensor.from_op(a.data + b.data, "add", (a, b), lambda g: (g, g))


def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return Tensor.from_op(a.data - b.data, "sub", (a, b), lambda g: (g, -g))


def mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return Tensor.from_op(
        a.data * b.data, "mul", (a, b), lambda g: (g * b.data, g * a.data)
    )


def div(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)

    def backward(g: np.ndarray):
        return g / b.data, -g * a.data / (b.data * b.data)

    return Tensor.from_op(a.data / b.data, "div", (a, b), backward)


def neg(a: Any) -> Tensor:
    a = as_tensor(a)
    return Tensor.from_op(-a.data, "neg", (a,), lambda g: (-g,))


# ==================================================================================================
# Linear algebra
# ==================================================================================================

def matmul(a: Any, b: Any) -> Tensor:
    """
    Matrix product over the last two axes; leading axes broadcast.

    Raises:
        DimensionError: If the inner extents differ (message carries both shapes)
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")

    def backward(g: np.ndarray):
        return g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g

    return Tensor.from_op(a.data @ b.data, "matmul", (a, b), backward)


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    pad: int = 0,
) -> Tensor:
    """
    2-D cross-correlation.

    Args:
        x: Input, C_in×H×W or B×C_in×H×W
        weight: Kernel, C_out×C_in×k×k
        bias: Optional per-output-channel bias (C_out)
        stride: Step between windows
        pad: Zero padding added on every side

    Returns:
        C_out×H'×W' (or B×C_out×H'×W') with H' = (H + 2·pad − k)/stride + 1

    Raises:
        DimensionError: On channel mismatch or a non-integral output extent
    """
    x, weight = as_tensor(x), as_tensor(weight)
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d: expected CHW/BCHW input and OIkk weight, got {x.shape}, {weight.shape}")
    batch, channels, height, width = xd.shape
    out_channels, in_channels, kh, kw = weight.shape
    if channels != in_channels:
        raise DimensionError(f"conv2d: input has {channels} channels, weight expects {in_channels}")
    span_h, span_w = height + 2 * pad - kh, width + 2 * pad - kw
    if span_h < 0 or span_w < 0 or span_h % stride or span_w % stride:
        raise DimensionError(
            f"conv2d: input {height}×{width} with k={kh}, stride={stride}, pad={pad} "
            f"gives a non-integral output extent"
        )
    out_h, out_w = span_h // stride + 1, span_w // stride + 1

    padded = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else xd
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    inputs: List[Tensor] = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None, None]
        inputs.append(bias)
    if squeeze:
        out = out[0]

    def backward(g: np.ndarray):
        g4 = g[None] if squeeze else g
        grad_w = np.tensordot(g4, windows, axes=([0, 2, 3], [0, 2, 3]))
        grad_padded = np.zeros_like(padded)
        for i in range(kh):
            for j in range(kw):
                contrib = np.tensordot(g4, weight.data[:, :, i, j], axes=([1], [0]))
                grad_padded[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += (
                    contrib.transpose(0, 3, 1, 2)
                )
        grad_x = grad_padded[:, :, pad:pad + height, pad:pad + width] if pad else grad_padded
        if squeeze:
            grad_x = grad_x[0]
        grads = [grad_x, grad_w]
        if bias is not None:
            grads.append(g4.sum(axis=(0, 2, 3)))
        return grads

    return Tensor.from_op(out, "conv2d", inputs, backward)


def upsample_nearest2x(x: Tensor) -> Tensor:
    """Nearest-neighbour ×2 upsampling of the last two axes."""
    x = as_tensor(x)
    out = np.repeat(np.repeat(x.data, 2, axis=-2), 2, axis=-1)
    height, width = x.shape[-2], x.shape[-1]

    def backward(g: np.ndarray):
        blocks = g.reshape(g.shape[:-2] + (height, 2, width, 2))
        return (blocks.sum(axis=(-3, -1)),)

    return Tensor.from_op(out, "upsample_nearest2x", (x,), backward)


# ==================================================================================================
# Nonlinearities
# ==================================================================================================

def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return Tensor.from_op(np.where(mask, x.data, 0), "relu", (x,), lambda g: (g * mask,))


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, x·Φ(x)."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data * _SQRT_HALF))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
    return Tensor.from_op(x.data * cdf, "gelu", (x,), lambda g: (g * (cdf + x.data * pdf),))


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return Tensor.from_op(out, "sigmoid", (x,), lambda g: (g * out * (1.0 - out),))


def exp(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return Tensor.from_op(out, "exp", (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    """Natural log. Callers clamp inputs with clamp_min first; log(0) is a numeric error."""
    x = as_tensor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)
    return Tensor.from_op(out, "log", (x,), lambda g: (g / x.data,))


def clamp_min(x: Tensor, minimum: float = NUMERIC_EPS) -> Tensor:
    x = as_tensor(x)
    keep = x.data > minimum
    return Tensor.from_op(np.where(keep, x.data, minimum), "clamp_min", (x,), lambda g: (g * keep,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """
    Softmax along `axis`, stabilized by subtracting the max.

    Raises:
        DimensionError: If the axis is empty or out of range
    """
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax: axis {axis} invalid for shape {x.shape}")
    if x.shape[axis] == 0:
        raise DimensionError(f"softmax: axis {axis} of shape {x.shape} is empty")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    expd = np.exp(shifted)
    out = expd / expd.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(out, "softmax", (x,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """
    Normalizes the last axis to zero mean / unit variance, then applies gamma, beta.

    Raises:
        DimensionError: If the last extent is 0 or differs from gamma/beta
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    features = x.shape[-1] if x.ndim else 0
    if features == 0:
        raise DimensionError(f"layer_norm: last extent of {x.shape} must be positive")
    if gamma.shape != (features,) or beta.shape != (features,):
        raise DimensionError(
            f"layer_norm: gamma {gamma.shape} / beta {beta.shape} do not match last extent {features}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gamma.data + beta.data

    def backward(g: np.ndarray):
        reduce_axes = tuple(range(g.ndim - 1))
        grad_gamma = (g * xhat).sum(axis=reduce_axes)
        grad_beta = g.sum(axis=reduce_axes)
        gx = g * gamma.data
        grad_x = (inv / features) * (
            features * gx
            - gx.sum(axis=-1, keepdims=True)
            - xhat * (gx * xhat).sum(axis=-1, keepdims=True)
        )
        return grad_x, grad_gamma, grad_beta

    return Tensor.from_op(out, "layer_norm", (x, gamma, beta), backward)


# ==================================================================================================
# Reductions and distances
# ==================================================================================================

def sum(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    axes = _normalize_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g: np.ndarray):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape),)

    return Tensor.from_op(out, "sum", (x,), backward)


def mean(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    if count == 0:
        raise DimensionError(f"mean: reducing empty axes {axes} of shape {x.shape}")
    out = x.data.mean(axis=axes, keepdims=keepdims)

    def backward(g: np.ndarray):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape),)

    return Tensor.from_op(out, "mean", (x,), backward)


def l1_distance(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute difference over all elements (a scalar)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"l1_distance: shapes {a.shape} and {b.shape} differ")
    diff = a.data - b.data
    count = diff.size

    def backward(g: np.ndarray):
        s = np.sign(diff) * (g / count)
        return s, -s

    return Tensor.from_op(np.abs(diff).mean(), "l1_distance", (a, b), backward)


def cosine_similarity(a: Tensor, b: Tensor, eps: float = NUMERIC_EPS) -> Tensor:
    """
    Row-pairwise cosine similarity.

    Args:
        a: (..., n, e)
        b: (..., m, e)
        eps: Lower clamp on row norms

    Returns:
        (..., n, m) with entry [i, j] = a_iᵀb_j / (‖a_i‖‖b_j‖)
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"cosine_similarity: shapes {a.shape} and {b.shape} are not aligned")
    norm_a = np.sqrt((a.data * a.data).sum(axis=-1, keepdims=True))
    norm_b = np.sqrt((b.data * b.data).sum(axis=-1, keepdims=True))
    live_a, live_b = norm_a > eps, norm_b > eps
    scale_a, scale_b = np.maximum(norm_a, eps), np.maximum(norm_b, eps)
    unit_a, unit_b = a.data / scale_a, b.data / scale_b
    out = unit_a @ np.swapaxes(unit_b, -1, -2)

    def backward(g: np.ndarray):
        g_unit_a = g @ unit_b
        g_unit_b = np.swapaxes(g, -1, -2) @ unit_a
        grad_a = (g_unit_a - unit_a * (g_unit_a * unit_a).sum(axis=-1, keepdims=True) * live_a) / scale_a
        grad_b = (g_unit_b - unit_b * (g_unit_b * unit_b).sum(axis=-1, keepdims=True) * live_b) / scale_b
        return grad_a, grad_b

    return Tensor.from_op(out, "cosine_similarity", (a, b), backward)


# ==================================================================================================
# Shape manipulation and indexing
# ==================================================================================================

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError:
        raise DimensionError(f"reshape: cannot reshape {x.shape} into {tuple(shape)}") from None
    return Tensor.from_op(out, "reshape", (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    x = as_tensor(x)
    axes = tuple(range(x.ndim))[::-1] if axes is None else tuple(axes)
    if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
        raise DimensionError(f"transpose: axes {axes} invalid for shape {x.shape}")
    inverse = tuple(np.argsort([a % x.ndim for a in axes]))
    return Tensor.from_op(
        np.transpose(x.data, axes), "transpose", (x,), lambda g: (np.transpose(g, inverse),)
    )


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat: no tensors given")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat: incompatible shapes {shapes} on axis {axis}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g: np.ndarray):
        return np.split(g, bounds, axis=axis)

    return Tensor.from_op(out, "concat", tensors, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("stack: no tensors given")
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


def getitem(x: Tensor, index: Any) -> Tensor:
    """Slicing/indexing; the gradient scatters back into the sliced positions."""
    x = as_tensor(x)
    if isinstance(index, Tensor):
        index = index.data.astype(np.int64)
    out = np.array(x.data[index])

    def backward(g: np.ndarray):
        grad = np.zeros_like(x.data)
        np.add.at(grad, index, g)
        return (grad,)

    return Tensor.from_op(out, "slice", (x,), backward)


def index_select(x: Tensor, axis: int, indices: Sequence[int]) -> Tensor:
    """Gathers `indices` along `axis` (repeats allowed; gradients accumulate)."""
    x = as_tensor(x)
    indices = np.asarray(indices, dtype=np.int64)
    axis = axis % x.ndim
    out = np.take(x.data, indices, axis=axis)

    def backward(g: np.ndarray):
        grad = np.zeros_like(x.data)
        np.add.at(np.moveaxis(grad, axis, 0), indices, np.moveaxis(g, axis, 0))
        return (grad,)

    return Tensor.from_op(out, "index_select", (x,), backward)


def embedding(weight: Tensor, ids: Any) -> Tensor:
    """
    Row lookup `weight[ids]`.

    Raises:
        DimensionError: If any id is negative or ≥ number of rows
    """
    weight = as_tensor(weight)
    ids = np.asarray(ids, dtype=np.int64)
    rows = weight.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= rows):
        raise DimensionError(f"embedding: ids must lie in [0, {rows}), got range [{ids.min()}, {ids.max()}]")

    def backward(g: np.ndarray):
        grad = np.zeros_like(weight.data)
        np.add.at(grad, ids, g)
        return (grad,)

    return Tensor.from_op(weight.data[ids], "embedding", (weight,), backward)
