# -*- coding: utf-8 -*-

"""
Parameter containers and the basic layers.

Modules discover their parameters, buffers and children from attributes
in definition order, so parameter names are stable and checkpoint tables
are reproducible (e.g. "blocks.0.attn.qkv.weight").
"""

from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

from cma_inpaint import ops
from cma_inpaint.exceptions import CheckpointError
from cma_inpaint.tensor import Tensor, get_default_dtype


class Parameter(Tensor):
    """Trainable leaf tensor."""

    def __init__(self, data: Any, dtype: Any = None):
        super().__init__(data, requires_grad=True, dtype=dtype)


class Module:
    """
    Base class of every layer and model.

    Subclasses assign Parameters, Modules and lists of Modules as attributes
    and implement `forward`. Non-trainable persistent arrays (spectral-norm
    vectors) are registered with `register_buffer`.
    """

    def __init__(self) -> None:
        self.training: bool = True
        self._buffers: Dict[str, np.ndarray] = {}

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError

    # --- traversal ----------------------------------------------------------------------------

    def _children(self) -> Iterator[Tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, value in self._buffers.items():
            yield prefix + name, value
        for name, child in self._children():
            yield from child.named_buffers(prefix + name + ".")

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = np.asarray(value, dtype=get_default_dtype())

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self._children():
            yield from child.modules()

    # --- mode and state -----------------------------------------------------------------------

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def astype(self, dtype: Any) -> "Module":
        """Casts every parameter and buffer in place (64-bit shadow checks of whole models)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for module in self.modules():
            for name, value in module._buffers.items():
                module._buffers[name] = value.astype(dtype)
        return self

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copies of every parameter and buffer, keyed by dotted name."""
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: value.copy() for name, value in self.named_buffers()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        """
        Copies values from `state` into parameters and buffers.

        Raises:
            CheckpointError: On missing/unexpected names (strict) or a shape mismatch
        """
        own_params = dict(self.named_parameters())
        own_buffers = {
            prefix + name: (module, name)
            for prefix, module in self._named_modules()
            for name in module._buffers
        }
        expected = set(own_params) | set(own_buffers)
        if strict:
            missing = sorted(expected - set(state))
            unexpected = sorted(set(state) - expected)
            if missing or unexpected:
                raise CheckpointError(f"state mismatch: missing {missing}, unexpected {unexpected}")
        for name, value in state.items():
            value = np.asarray(value)
            if name in own_params:
                target = own_params[name]
                if target.shape != value.shape:
                    raise CheckpointError(f"{name}: stored shape {value.shape}, model expects {target.shape}")
                target.data = value.astype(target.dtype).copy()
            elif name in own_buffers:
                module, key = own_buffers[name]
                if module._buffers[key].shape != value.shape:
                    raise CheckpointError(
                        f"{name}: stored shape {value.shape}, model expects {module._buffers[key].shape}"
                    )
                module._buffers[key] = value.astype(module._buffers[key].dtype).copy()

    def _named_modules(self, prefix: str = "") -> Iterator[Tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self._children():
            yield from child._named_modules(prefix + name + ".")


# ==================================================================================================
# Layers
# ==================================================================================================

def _init_normal(rng: np.random.Generator, shape: Tuple[int, ...], std: float) -> np.ndarray:
    return rng.normal(0.0, std, size=shape).astype(get_default_dtype())


class Linear(Module):
    """y = x·Wᵀ + b with W stored as (out, in)."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.weight = Parameter(_init_normal(rng, (out_features, in_features), in_features ** -0.5))
        self.bias: Optional[Parameter] = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor, weight: Optional[Tensor] = None) -> Tensor:
        w = self.weight if weight is None else weight
        out = ops.matmul(x, ops.transpose(w, (1, 0)))
        if self.bias is not None:
            out = ops.add(out, self.bias)
        return out


class Conv2d(Module):
    """Square-kernel convolution with fixed stride and padding."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 1,
        pad: int = 0,
        bias: bool = True,
    ):
        super().__init__()
        fan_in = in_channels * kernel * kernel
        self.stride = stride
        self.pad = pad
        self.weight = Parameter(
            _init_normal(rng, (out_channels, in_channels, kernel, kernel), (2.0 / fan_in) ** 0.5)
        )
        self.bias: Optional[Parameter] = Parameter(np.zeros(out_channels)) if bias else None

    def forward(self, x: Tensor, weight: Optional[Tensor] = None) -> Tensor:
        w = self.weight if weight is None else weight
        return ops.conv2d(x, w, self.bias, stride=self.stride, pad=self.pad)


class LayerNorm(Module):
    def __init__(self, features: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = Parameter(np.ones(features))
        self.beta = Parameter(np.zeros(features))

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


class Embedding(Module):
    def __init__(self, rows: int, features: int, rng: np.random.Generator, std: float = 0.02):
        super().__init__()
        self.weight = Parameter(_init_normal(rng, (rows, features), std))

    def forward(self, ids: Any) -> Tensor:
        return ops.embedding(self.weight, ids)
