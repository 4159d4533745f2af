# -*- coding: utf-8 -*-

"""
Spectrally normalized global and local discriminators.

Both discriminators are five stride-2 residual blocks, a global average
pool and a fully connected scalar head. Every conv and the head are
divided by their estimated top singular value before use; the left
singular vector u of each layer is a persistent buffer advanced by one
power-iteration step per forward pass in training mode (eval mode
reads u without updating it, so the network is a fixed function).
"""

from typing import List, NamedTuple, Optional, Union

import numpy as np
from loguru import logger

from cma_inpaint import ops
from cma_inpaint.config import NUMERIC_EPS
from cma_inpaint.exceptions import DimensionError
from cma_inpaint.masks import Mask, mask_bbox
from cma_inpaint.models import DiscriminatorConfig
from cma_inpaint.nn import Conv2d, Linear, Module
from cma_inpaint.tensor import Tensor, as_tensor, no_grad


class PowerIteration(NamedTuple):
    u: np.ndarray
    v: np.ndarray
    sigma: float


def _unit(x: np.ndarray) -> np.ndarray:
    return x / max(float(np.linalg.norm(x)), NUMERIC_EPS)


def power_iteration(matrix: np.ndarray, u: np.ndarray, iterations: int = 1) -> PowerIteration:
    """
    Power iteration for the top singular triple of a matrix.

    Args:
        matrix: out×in matrix
        u: Current left singular vector estimate (length out)
        iterations: Steps to run (≥ 1)

    Returns:
        Updated u, the matching v and σ̂ = uᵀ·W·v
    """
    u = _unit(np.asarray(u, dtype=matrix.dtype))
    v = _unit(matrix.T @ u)
    for step in range(iterations):
        if step:
            v = _unit(matrix.T @ u)
        u = _unit(matrix @ v)
    return PowerIteration(u=u, v=v, sigma=float(u @ matrix @ v))


def spectral_normalize(weight: Tensor, u: np.ndarray, iterations: int = 1):
    """
    Divides a weight by its estimated spectral norm.

    The weight is flattened to out×(rest). u and v are constants of the
    tape; the gradient flows through W in both ŵ = W/σ̂ and σ̂ = uᵀWv.
    σ̂ is clamped at 1e-8, so an all-zero weight stays finite.

    Args:
        weight: Conv (out×in×k×k) or linear (out×in) weight
        u: Persistent left singular vector (length out)
        iterations: Power-iteration steps

    Returns:
        (ŵ, u') where u' is the advanced left singular vector
    """
    weight = as_tensor(weight)
    out_features = weight.shape[0]
    if np.shape(u) != (out_features,):
        raise DimensionError(f"spectral_normalize: u has shape {np.shape(u)}, expected ({out_features},)")
    matrix = weight.data.reshape(out_features, -1)
    with no_grad():
        result = power_iteration(matrix, u, iterations)
    outer = Tensor(np.outer(result.u, result.v), dtype=weight.dtype)
    sigma = ops.sum(ops.mul(ops.reshape(weight, matrix.shape), outer))
    return ops.div(weight, ops.clamp_min(sigma, NUMERIC_EPS)), result.u


class _SpectralNorm(Module):
    """Holds a wrapped layer and its persistent u buffer."""

    def _init_u(self, out_features: int, rng: np.random.Generator) -> None:
        self.register_buffer("u", _unit(rng.normal(size=out_features)))

    def _normalized_weight(self, weight: Tensor) -> Tensor:
        normalized, u = spectral_normalize(weight, self._buffers["u"], self.iterations)
        if self.training:
            self._buffers["u"] = u.astype(self._buffers["u"].dtype)
        return normalized


class SNConv2d(_SpectralNorm):
    def __init__(self, in_channels: int, out_channels: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, pad: int = 0, bias: bool = True, iterations: int = 1):
        super().__init__()
        self.iterations = iterations
        self.conv = Conv2d(in_channels, out_channels, kernel, rng, stride=stride, pad=pad, bias=bias)
        self._init_u(out_channels, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(x, weight=self._normalized_weight(self.conv.weight))


class SNLinear(_SpectralNorm):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, iterations: int = 1):
        super().__init__()
        self.iterations = iterations
        self.linear = Linear(in_features, out_features, rng)
        self._init_u(out_features, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.linear(x, weight=self._normalized_weight(self.linear.weight))


class DiscriminatorBlock(Module):
    """Stride-2 residual block: conv4x4/2(relu(conv3x3(act(x)))) + conv2x2/2(x)."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator,
                 preactivate: bool, iterations: int):
        super().__init__()
        self.preactivate = preactivate
        self.conv1 = SNConv2d(in_channels, out_channels, 3, rng, pad=1, iterations=iterations)
        self.conv2 = SNConv2d(out_channels, out_channels, 4, rng, stride=2, pad=1, iterations=iterations)
        self.shortcut = SNConv2d(in_channels, out_channels, 2, rng, stride=2, bias=False, iterations=iterations)

    def forward(self, x: Tensor) -> Tensor:
        h = ops.relu(x) if self.preactivate else x
        h = self.conv2(ops.relu(self.conv1(h)))
        return ops.add(self.shortcut(x), h)


class Discriminator(Module):
    """
    Five stride-2 residual blocks, ReLU, global average pool and an SN linear head.

    Accepts C×R×R (returns a scalar) or B×C×R×R (returns B scores).
    """

    def __init__(self, cfg: DiscriminatorConfig, resolution: int, channels: int, rng: np.random.Generator):
        super().__init__()
        if resolution % 32:
            raise DimensionError(f"discriminator resolution {resolution} is not a multiple of 32")
        self.resolution = resolution
        self.channels = channels
        self.blocks: List[DiscriminatorBlock] = []
        width = channels
        for index, out_width in enumerate(cfg.channels):
            self.blocks.append(DiscriminatorBlock(width, out_width, rng, index > 0, cfg.power_iterations))
            width = out_width
        self.head = SNLinear(width, 1, rng, iterations=cfg.power_iterations)

    def forward(self, x: Tensor) -> Tensor:
        x = as_tensor(x)
        if x.shape[-3:] != (self.channels, self.resolution, self.resolution):
            raise DimensionError(
                f"discriminator expects (…, {self.channels}, {self.resolution}, {self.resolution}), got {x.shape}"
            )
        for block in self.blocks:
            x = block(x)
        pooled = ops.mean(ops.relu(x), axis=(-2, -1))
        score = self.head(pooled)
        return ops.reshape(score, score.shape[:-1])


def local_crop(image: Tensor, mask: Union[Mask, np.ndarray], size: int = 32) -> Tensor:
    """
    Crops the missing region and resizes it to size×size.

    The tight bounding box of the mask is expanded to a square (centered,
    shifted back inside the image when it would cross a border) and
    nearest-neighbour resized; the crop stays differentiable w.r.t. the image.

    Args:
        image: C×H×W tensor
        mask: Mask or H×W array (1 = missing)
        size: Output side

    Raises:
        DataError: If the mask is empty (raised by mask_bbox)
    """
    image = as_tensor(image)
    mask = mask if isinstance(mask, Mask) else Mask(np.asarray(mask))
    height, width = image.shape[-2:]
    if mask.shape != (height, width):
        raise DimensionError(f"local_crop: mask {mask.shape} does not match image {image.shape}")
    x0, y0, x1, y1 = mask_bbox(mask)
    side = min(max(x1 - x0, y1 - y0), height, width)
    left = int(np.clip(x0 - (side - (x1 - x0)) // 2, 0, width - side))
    top = int(np.clip(y0 - (side - (y1 - y0)) // 2, 0, height - side))
    offsets = np.floor((np.arange(size) + 0.5) * side / size).astype(np.int64)
    rows = ops.index_select(image, -2, top + offsets)
    return ops.index_select(rows, -1, left + offsets)


def local_crops(images: Tensor, masks: np.ndarray, size: int = 32) -> Tensor:
    """local_crop over a batch: B×C×H×W images and B×H×W masks -> B×C×size×size."""
    images = as_tensor(images)
    if images.shape[0] != len(masks):
        raise DimensionError(f"local_crops: {images.shape[0]} images but {len(masks)} masks")
    crops = [local_crop(ops.getitem(images, i), masks[i], size) for i in range(images.shape[0])]
    return ops.stack(crops, axis=0)


def empirical_lipschitz(discriminator: Discriminator, xs: np.ndarray, ys: np.ndarray) -> Optional[float]:
    """
    max |D(x) − D(y)| / ‖x − y‖ over paired images (eval mode, no tape).

    Returns None when every pair is identical.
    """
    was_training = discriminator.training
    discriminator.eval()
    try:
        with no_grad():
            dx = discriminator(Tensor(xs)).data.reshape(-1)
            dy = discriminator(Tensor(ys)).data.reshape(-1)
    finally:
        discriminator.train(was_training)
    distance = np.sqrt(((np.asarray(xs) - np.asarray(ys)) ** 2).reshape(len(dx), -1).sum(axis=1))
    live = distance > 0
    if not live.any():
        return None
    ratio = float(np.max(np.abs(dx - dy)[live] / distance[live]))
    logger.debug(f"[Discriminator] Empirical Lipschitz ratio over {int(live.sum())} pairs: {ratio:.4f}")
    return ratio
