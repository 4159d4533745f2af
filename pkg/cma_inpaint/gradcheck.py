# -*- coding: utf-8 -*-

"""
Finite-difference gradient checking.

`grad_check` compares the tape's analytic gradient with central differences.
By default it runs in the 64-bit shadow mode (every tensor created while
evaluating `f` is float64); gradient checks are unreliable at 32 bits.

`op_gradcheck_suite` runs the check over every required primitive op and
is what `cma gradcheck` prints.
"""

from typing import Callable, Dict, Optional

import numpy as np
from loguru import logger

from cma_inpaint import ops
from cma_inpaint.exceptions import DimensionError
from cma_inpaint.tensor import Tensor, default_dtype, no_grad

TensorFn = Callable[[Tensor], Tensor]

# Default central-difference steps per precision
H_FLOAT32: float = 1e-3
H_FLOAT64: float = 1e-5

# Acceptance threshold for the maximum relative error
GRADCHECK_TOLERANCE: float = 1e-4


def _scalar(out: Tensor) -> float:
    if out.size != 1:
        raise DimensionError(f"grad_check: f must return a scalar, got shape {out.shape}")
    return out.item()


def numeric_gradient(f: TensorFn, x: np.ndarray, h: float) -> np.ndarray:
    """
    Central-difference gradient of a scalar tensor function.

    Args:
        f: Function mapping a tensor to a scalar tensor
        x: Point at which to differentiate
        h: Step size

    Returns:
        Array shaped like `x`
    """
    base = np.array(x, copy=True)
    flat = base.reshape(-1)
    grad = np.zeros_like(flat)
    with no_grad():
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = _scalar(f(Tensor(base.copy(), dtype=base.dtype)))
            flat[i] = original - h
            minus = _scalar(f(Tensor(base.copy(), dtype=base.dtype)))
            flat[i] = original
            grad[i] = (plus - minus) / (2.0 * h)
    return grad.reshape(base.shape)


def grad_check(f: TensorFn, x: Tensor, h: Optional[float] = None, shadow: bool = True) -> float:
    """
    Maximum relative error between analytic and central-difference gradients.

    error = max_i |analytic_i − numeric_i| / max(1e-8, |analytic_i| + |numeric_i|)

    Args:
        f: Function mapping a tensor to a scalar tensor; must be deterministic
        x: Point at which to check (values are copied, x is not modified)
        h: Step size (default 1e-5 in shadow mode, 1e-3 otherwise)
        shadow: Run in the 64-bit shadow mode

    Returns:
        Maximum relative error (0.0 for an empty x)

    Raises:
        DimensionError: If f does not return a scalar
    """
    dtype = np.float64 if shadow else np.float32
    step = h if h is not None else (H_FLOAT64 if shadow else H_FLOAT32)
    with default_dtype(dtype):
        point = np.array(x.data, dtype=dtype, copy=True)
        leaf = Tensor(point.copy(), requires_grad=True, dtype=dtype)
        out = f(leaf)
        _scalar(out)
        out.backward()
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(point)
        numeric = numeric_gradient(f, point, step)
    if point.size == 0:
        return 0.0
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    error = float(np.max(np.abs(analytic - numeric) / denom))
    logger.debug(f"[GradCheck] {point.size} elements, h={step}, max relative error {error:.3e}")
    return error


def _weighted(fn: TensorFn, out_shape_probe: Tensor, rng: np.random.Generator) -> TensorFn:
    """Wraps fn so that its output is reduced with fixed random weights (keeps gradients O(1))."""
    weights = rng.uniform(0.5, 1.5, size=fn(out_shape_probe).shape)

    def reduced(x: Tensor) -> Tensor:
        return ops.sum(ops.mul(fn(x), Tensor(weights)))

    return reduced


def op_gradcheck_suite(seed: int = 0) -> Dict[str, float]:
    """
    Runs grad_check over every required primitive op at a random point.

    Points are drawn away from kinks (relu, clamp_min) so central differences
    are well defined.

    Args:
        seed: Seed of the random points and reduction weights

    Returns:
        Mapping op name -> maximum relative error
    """
    rng = np.random.default_rng(seed)
    with default_dtype(np.float64):
        def away_from_zero(*shape: int) -> np.ndarray:
            values = rng.uniform(0.2, 1.5, size=shape)
            return values * rng.choice([-1.0, 1.0], size=shape)

        other = Tensor(rng.normal(size=(3, 4)))
        positive = Tensor(rng.uniform(0.5, 2.0, size=(3, 4)))
        right = Tensor(rng.normal(size=(4, 5)))
        kernel = Tensor(rng.normal(size=(2, 3, 3, 3)) * 0.5)
        gamma = Tensor(rng.uniform(0.5, 1.5, size=4))
        beta = Tensor(rng.normal(size=4))
        table = Tensor(rng.normal(size=(6, 4)))
        ids = np.array([0, 3, 3, 5])
        keys = Tensor(rng.normal(size=(5, 4)))

        cases: Dict[str, tuple] = {
            "add": (lambda x: ops.add(x, other), rng.normal(size=(3, 4))),
            "sub": (lambda x: ops.sub(x, other), rng.normal(size=(3, 4))),
            "mul": (lambda x: ops.mul(x, other), rng.normal(size=(3, 4))),
            "div": (lambda x: ops.div(x, positive), rng.normal(size=(3, 4))),
            "div_denominator": (lambda x: ops.div(other, x), rng.uniform(0.5, 2.0, size=(3, 4))),
            "neg": (ops.neg, rng.normal(size=(3, 4))),
            "matmul": (lambda x: ops.matmul(x, right), rng.normal(size=(3, 4))),
            "conv2d": (lambda x: ops.conv2d(x, kernel, stride=1, pad=1), rng.normal(size=(3, 5, 5))),
            "conv2d_stride2": (lambda x: ops.conv2d(x, kernel, stride=2, pad=1), rng.normal(size=(3, 5, 5))),
            "conv2d_weight": (
                lambda w: ops.conv2d(Tensor(np.linspace(-1, 1, 75).reshape(3, 5, 5)), w, pad=1),
                rng.normal(size=(2, 3, 3, 3)),
            ),
            "upsample_nearest2x": (ops.upsample_nearest2x, rng.normal(size=(2, 3, 3))),
            "relu": (ops.relu, away_from_zero(3, 4)),
            "gelu": (ops.gelu, rng.normal(size=(3, 4))),
            "sigmoid": (ops.sigmoid, rng.normal(size=(3, 4))),
            "exp": (ops.exp, rng.normal(size=(3, 4))),
            "softmax": (lambda x: ops.softmax(x, axis=-1), rng.normal(size=(3, 4))),
            "softmax_axis0": (lambda x: ops.softmax(x, axis=0), rng.normal(size=(3, 4))),
            "layer_norm": (lambda x: ops.layer_norm(x, gamma, beta), rng.normal(size=(3, 4))),
            "mean": (lambda x: ops.mean(x, axis=1), rng.normal(size=(3, 4))),
            "sum": (lambda x: ops.sum(x, axis=0), rng.normal(size=(3, 4))),
            "l1_distance": (lambda x: ops.l1_distance(x, other), other.data + away_from_zero(3, 4)),
            "concat": (lambda x: ops.concat([x, other], axis=1), rng.normal(size=(3, 4))),
            "slice": (lambda x: ops.getitem(x, (slice(0, 2), slice(1, 4))), rng.normal(size=(3, 4))),
            "reshape": (lambda x: ops.reshape(x, (2, 6)), rng.normal(size=(3, 4))),
            "transpose": (lambda x: ops.transpose(x, (1, 0)), rng.normal(size=(3, 4))),
            "embedding": (lambda w: ops.embedding(w, ids), table.data),
            "index_select": (lambda x: ops.index_select(x, 1, [0, 2, 2, 3]), rng.normal(size=(3, 4))),
            "cosine_similarity": (lambda x: ops.cosine_similarity(x, keys), rng.normal(size=(3, 4))),
            "log": (ops.log, rng.uniform(0.5, 2.0, size=(3, 4))),
            "clamp_min": (lambda x: ops.clamp_min(x, 0.0), away_from_zero(3, 4)),
        }

        results: Dict[str, float] = {}
        for name, (fn, point) in cases.items():
            probe = Tensor(point)
            results[name] = grad_check(_weighted(fn, probe, rng), probe)
    return results
