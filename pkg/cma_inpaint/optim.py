# -*- coding: utf-8 -*-

"""
AdamW, global-norm gradient clipping and the warmup learning-rate schedule.
"""

import math
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from cma_inpaint.exceptions import CheckpointError
from cma_inpaint.nn import Parameter


def lr_at(step: int, base_lr: float, warmup_steps: int) -> float:
    """
    Linear warmup then constant: base_lr · min(1, step / warmup_steps).

    Steps are 1-based (the first update uses base_lr / warmup_steps).
    """
    if warmup_steps < 1:
        raise ValueError(f"warmup_steps must be ≥ 1, got {warmup_steps}")
    return base_lr * min(1.0, step / warmup_steps)


def global_grad_norm(params: Iterable[Parameter]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(np.square(p.grad, dtype=np.float64)))
    return math.sqrt(total)


def clip_grad_norm(params: Sequence[Parameter], max_norm: float) -> float:
    """
    Scales all gradients in place so their joint L2 norm is at most max_norm.

    Returns:
        The norm before clipping
    """
    norm = global_grad_norm(params)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = (p.grad * scale).astype(p.grad.dtype)
    return norm


class AdamW:
    """
    Adam with decoupled weight decay.

    Weight decay multiplies a parameter by (1 − lr·wd) before the Adam step
    and only applies to parameters with two or more dimensions (weights,
    not biases, gains or gates).

    Args:
        named_params: (name, parameter) pairs; names key the moment buffers
        betas: (β₁, β₂)
        eps: Denominator epsilon
        weight_decay: Decoupled decay coefficient
    """

    def __init__(
        self,
        named_params: Iterable[Tuple[str, Parameter]],
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        self.named_params: List[Tuple[str, Parameter]] = list(named_params)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m: Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in self.named_params}
        self.v: Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in self.named_params}

    @property
    def params(self) -> List[Parameter]:
        return [p for _, p in self.named_params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for name, p in self.named_params:
            if p.grad is None:
                continue
            grad = p.grad.astype(p.data.dtype)
            if self.weight_decay and p.ndim >= 2:
                p.data = p.data * (1.0 - lr * self.weight_decay)
            m = self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            v = self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
            update = (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            p.data = (p.data - lr * update).astype(p.data.dtype)

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Moment buffers keyed "m.<param>" / "v.<param>"; the step counter travels separately."""
        state = {f"m.{name}": value.copy() for name, value in self.m.items()}
        state.update({f"v.{name}": value.copy() for name, value in self.v.items()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray], t: int) -> None:
        """
        Raises:
            CheckpointError: If a moment buffer is missing or has the wrong shape
        """
        for name, p in self.named_params:
            for prefix, target in (("m", self.m), ("v", self.v)):
                key = f"{prefix}.{name}"
                if key not in state:
                    raise CheckpointError(f"optimizer state is missing {key}")
                value = np.asarray(state[key])
                if value.shape != p.shape:
                    raise CheckpointError(f"{key}: stored shape {value.shape}, parameter has {p.shape}")
                target[name] = value.astype(p.data.dtype).copy()
        self.t = int(t)
