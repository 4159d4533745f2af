# -*- coding: utf-8 -*-

"""
Tensor type and reverse-mode automatic differentiation engine.

A Tensor wraps a numpy array. Every differentiable op (see `cma_inpaint.ops`)
records a Node holding its inputs and a backward rule; `Tensor.backward()`
builds a Tape (the topologically ordered list of recorded nodes reachable
from the loss) and replays it in reverse, visiting every node exactly once.

Gradients accumulate (+=) into leaf tensors created with requires_grad=True
until `zero_grad()` is called. Non-leaf gradients are kept only for the
duration of one backward pass.

Precision:
    float32 is the training dtype. The 64-bit shadow mode (`default_dtype`)
    makes every tensor created inside the context float64 and is used by
    gradient checks.
"""

import contextlib
import threading
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from cma_inpaint.config import CHECK_FINITE
from cma_inpaint.exceptions import DimensionError, NumericError

# Backward rule: upstream gradient -> one gradient (or None) per input
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class _EngineState(threading.local):
    """Per-thread engine switches. The tape is confined to the thread that built it."""

    def __init__(self) -> None:
        self.grad_enabled: bool = True
        self.dtype: np.dtype = np.dtype(np.float32)
        self.check_finite: bool = CHECK_FINITE


_state = _EngineState()


def is_grad_enabled() -> bool:
    """Returns True if ops on this thread currently record nodes."""
    return _state.grad_enabled


def get_default_dtype() -> np.dtype:
    """Returns the dtype new tensors are created with on this thread."""
    return _state.dtype


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Context in which ops do not record nodes (teacher pass, evaluation, updates)."""
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


@contextlib.contextmanager
def default_dtype(dtype: Any) -> Iterator[None]:
    """
    Context selecting the dtype of newly created tensors.

    `default_dtype(np.float64)` is the 64-bit shadow mode used by grad_check.
    """
    previous = _state.dtype
    _state.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = previous


@contextlib.contextmanager
def finite_checks(enabled: bool) -> Iterator[None]:
    """Context enabling or disabling the per-op NaN/Inf check."""
    previous = _state.check_finite
    _state.check_finite = enabled
    try:
        yield
    finally:
        _state.check_finite = previous


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """
    Sums a broadcast gradient back down to `shape`.

    Args:
        grad: Gradient with the (possibly broadcast) output shape
        shape: Shape of the input that was broadcast

    Returns:
        Gradient with exactly `shape`
    """
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


@dataclass(eq=False)
class Node:
    """One recorded operation: its name, its inputs and its backward rule."""

    op: str
    inputs: Tuple["Tensor", ...]
    backward: BackwardFn


class Tensor:
    """
    Dense N-dimensional float array participating in the gradient tape.

    Attributes:
        data: numpy array (row-major), float32 unless created in shadow mode
        requires_grad: True if gradients should flow into this tensor
        grad: Accumulated gradient buffer for leaves (same shape as data) or None

    Example:
        >>> x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        >>> (x * x).sum().backward()
        >>> x.grad
        array([2., 4., 6.], dtype=float32)
    """

    __array_priority__ = 1000

    def __init__(self, data: Any, requires_grad: bool = False, dtype: Any = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data: np.ndarray = np.asarray(data, dtype=dtype or _state.dtype)
        self.requires_grad: bool = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._node: Optional[Node] = None

    # --- construction helpers -----------------------------------------------------------------

    @classmethod
    def from_op(
        cls,
        data: np.ndarray,
        op: str,
        inputs: Sequence["Tensor"],
        backward: BackwardFn,
    ) -> "Tensor":
        """
        Wraps the result of a primitive op and records it when gradients are needed.

        Args:
            data: Forward result
            op: Op name (used in error messages)
            inputs: Tensor inputs of the op
            backward: Rule mapping the upstream gradient to input gradients

        Returns:
            New tensor whose dtype is the promotion of the input dtypes

        Raises:
            NumericError: If the result contains NaN/Inf and finite checks are on
        """
        if inputs:
            dtype = np.result_type(*(t.data.dtype for t in inputs))
        else:
            dtype = _state.dtype
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=dtype)
        out.grad = None
        out._node = None
        if _state.check_finite and not np.all(np.isfinite(out.data)):
            raise NumericError(f"non-finite output from op '{op}'", component=op)
        needs_grad = _state.grad_enabled and any(t.requires_grad for t in inputs)
        out.requires_grad = needs_grad
        if needs_grad:
            out._node = Node(op=op, inputs=tuple(inputs), backward=backward)
        return out

    # --- basic properties ---------------------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def item(self) -> float:
        """Returns the value of a one-element tensor as a Python float."""
        if self.data.size != 1:
            raise DimensionError(f"item() needs a one-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        """Returns a copy of the underlying array."""
        return self.data.copy()

    def detach(self) -> "Tensor":
        """Returns a tensor sharing the data but cut from the tape."""
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # --- autodiff -----------------------------------------------------------------------------

    def _accumulate(self, grad: np.ndarray) -> None:
        grad = np.asarray(grad, dtype=self.data.dtype)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """
        Populates `.grad` of every requires_grad leaf reachable from this scalar.

        Repeated calls without `zero_grad()` accumulate.

        Raises:
            DimensionError: If this tensor is not a scalar (one element)
        """
        if self.data.size != 1:
            raise DimensionError(f"backward() needs a scalar loss, got shape {self.shape}")
        seed = np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=self.dtype)
        if self._node is None:
            if self.requires_grad:
                self._accumulate(seed)
            return
        Tape.record(self).replay(self, seed)

    # --- operator sugar (primitives live in cma_inpaint.ops) ----------------------------------

    def __add__(self, other: Any) -> "Tensor":
        return _ops.add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        return _ops.add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        return _ops.sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        return _ops.sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        return _ops.mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        return _ops.mul(other, self)

    def __truediv__(self, other: Any) -> "Tensor":
        return _ops.div(self, other)

    def __rtruediv__(self, other: Any) -> "Tensor":
        return _ops.div(other, self)

    def __neg__(self) -> "Tensor":
        return _ops.neg(self)

    def __matmul__(self, other: Any) -> "Tensor":
        return _ops.matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        return _ops.getitem(self, index)

    def sum(self, axis: Any = None, keepdims: bool = False) -> "Tensor":
        return _ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Any = None, keepdims: bool = False) -> "Tensor":
        return _ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: Any) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _ops.reshape(self, shape)

    def transpose(self, *axes: Any) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return _ops.transpose(self, axes or None)

    def swapaxes(self, a: int, b: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return _ops.transpose(self, tuple(axes))

    def relu(self) -> "Tensor":
        return _ops.relu(self)

    def exp(self) -> "Tensor":
        return _ops.exp(self)

    def log(self) -> "Tensor":
        return _ops.log(self)

    def sigmoid(self) -> "Tensor":
        return _ops.sigmoid(self)

    def softmax(self, axis: int = -1) -> "Tensor":
        return _ops.softmax(self, axis=axis)


class Tape:
    """
    Topologically ordered record of the operations behind one output.

    Invariants:
        - every entry's inputs that are themselves recorded appear before it
        - replaying in reverse visits each entry exactly once
    """

    def __init__(self, entries: List[Tensor]):
        self.entries = entries

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ops(self) -> List[str]:
        return [t._node.op for t in self.entries if t._node is not None]

    @classmethod
    def record(cls, root: Tensor) -> "Tape":
        """
        Collects every recorded node reachable from `root` in post-order.

        Iterative depth-first search, so deep graphs do not hit the recursion limit.
        """
        order: List[Tensor] = []
        visited: set = set()
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                order.append(tensor)
                continue
            if id(tensor) in visited or tensor._node is None:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))
            for parent in tensor._node.inputs:
                if parent._node is not None and id(parent) not in visited:
                    stack.append((parent, False))
        return cls(order)

    def replay(self, root: Tensor, seed: np.ndarray) -> None:
        """Runs every backward rule once, from `root` back to the leaves."""
        grads: Dict[int, np.ndarray] = {id(root): seed}
        for tensor in reversed(self.entries):
            upstream = grads.pop(id(tensor), None)
            if upstream is None:
                continue
            node = tensor._node
            input_grads = node.backward(upstream)
            for parent, grad in zip(node.inputs, input_grads):
                if grad is None or not parent.requires_grad:
                    continue
                grad = unbroadcast(np.asarray(grad), parent.shape)
                if parent._node is None:
                    parent._accumulate(grad)
                elif id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + grad
                else:
                    grads[id(parent)] = grad


def as_tensor(value: Any) -> Tensor:
    """Returns `value` unchanged if it is a Tensor, else a constant tensor."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


from cma_inpaint import ops as _ops  # noqa: E402  (ops needs Tensor defined first)
