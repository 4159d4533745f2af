# -*- coding: utf-8 -*-

"""
Residual CNN generator.

The visual priors V̂ (N×e) are laid out on their √N×√N patch grid,
downsampled by five residual blocks to a deep representation v, and
upsampled by five residual blocks (nearest ×2 before each block until the
image resolution is reached) to the restored image I_r. At the stage
whose resolution equals the prior grid, the grid is 1×1-projected and
concatenated as a skip connection. A 1×1 conv and a sigmoid map to RGB.
"""

from typing import List, Optional, Tuple

import numpy as np
from loguru import logger

from cma_inpaint import ops
from cma_inpaint.exceptions import ConfigError, DimensionError
from cma_inpaint.models import GeneratorConfig
from cma_inpaint.nn import Conv2d, Module, Parameter
from cma_inpaint.patches import grid_side
from cma_inpaint.tensor import Tensor, as_tensor


def reshape_priors(priors: Tensor) -> Tensor:
    """
    V̂ (…, N, e) -> prior grid (…, e, √N, √N); row i lands at (i div √N, i mod √N).

    Raises:
        DimensionError: If N is not a perfect square
    """
    priors = as_tensor(priors)
    *lead, count, features = priors.shape
    side = grid_side(count)
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead))
    return ops.reshape(ops.transpose(priors, axes), (*lead, features, side, side))


def flatten_priors(grid: Tensor) -> Tensor:
    """Inverse of reshape_priors."""
    grid = as_tensor(grid)
    *lead, features, height, width = grid.shape
    flat = ops.reshape(grid, (*lead, features, height * width))
    k = len(lead)
    return ops.transpose(flat, tuple(range(k)) + (k + 1, k))


class ResidualBlock(Module):
    """
    out = shortcut(x) + g · conv2(relu(conv1(x)))

    g is a learnable scalar gate starting at 0, so a freshly built block
    reduces to its shortcut. Stride-2 blocks use a 4×4/pad-1 first conv and a
    2×2/stride-2 shortcut; shortcuts have no bias.
    """

    def __init__(self, in_channels: int, out_channels: int, stride: int, rng: np.random.Generator):
        super().__init__()
        if stride == 1:
            self.conv1 = Conv2d(in_channels, out_channels, 3, rng, stride=1, pad=1)
        else:
            self.conv1 = Conv2d(in_channels, out_channels, 4, rng, stride=2, pad=1)
        self.conv2 = Conv2d(out_channels, out_channels, 3, rng, stride=1, pad=1)
        self.shortcut: Optional[Conv2d] = None
        if stride == 2:
            self.shortcut = Conv2d(in_channels, out_channels, 2, rng, stride=2, bias=False)
        elif in_channels != out_channels:
            self.shortcut = Conv2d(in_channels, out_channels, 1, rng, bias=False)
        self.gate = Parameter(np.zeros(()))

    def forward(self, x: Tensor) -> Tensor:
        branch = self.conv2(ops.relu(self.conv1(x)))
        skip = x if self.shortcut is None else self.shortcut(x)
        return ops.add(skip, ops.mul(self.gate, branch))


class Generator(Module):
    """
    DownSampling + UpSampling generator with a prior-grid skip connection.

    Args:
        cfg: Stage widths, strides and skip stage
        prior_channels: e, the encoder hidden size
        grid: √N, side of the prior grid
        image_size: H = W of the restored image
        channels: Output image channels
        rng: Initialization generator

    Raises:
        ConfigError: If the grid is not divisible by the downsampling factor,
            the upsampling path never reaches image_size, or no stage matches the grid
    """

    def __init__(
        self,
        cfg: GeneratorConfig,
        prior_channels: int,
        grid: int,
        image_size: int,
        channels: int,
        rng: np.random.Generator,
    ):
        super().__init__()
        self.cfg = cfg
        self.grid = grid
        self.image_size = image_size
        if grid % cfg.downscale:
            raise ConfigError(f"generator: prior grid {grid} is not divisible by downscale {cfg.downscale}")
        self.stage_resolutions, self.upsample_flags = self._plan(grid // cfg.downscale, image_size)
        self.skip_stage = self._resolve_skip_stage(cfg.skip_stage)

        self.down_blocks: List[ResidualBlock] = []
        width = prior_channels
        for out_width, stride in zip(cfg.down_channels, cfg.down_strides):
            self.down_blocks.append(ResidualBlock(width, out_width, stride, rng))
            width = out_width

        self.skip_projection = Conv2d(prior_channels, cfg.skip_channels, 1, rng)
        self.up_blocks: List[ResidualBlock] = []
        for index, out_width in enumerate(cfg.up_channels):
            in_width = width + (cfg.skip_channels if index == self.skip_stage else 0)
            self.up_blocks.append(ResidualBlock(in_width, out_width, 1, rng))
            width = out_width
        self.head = Conv2d(width, channels, 1, rng)
        logger.debug(
            f"[Generator] grid {grid} -> {grid // cfg.downscale}, up resolutions {self.stage_resolutions}, "
            f"skip at stage {self.skip_stage}"
        )

    @staticmethod
    def _plan(start: int, image_size: int) -> Tuple[List[int], List[bool]]:
        resolution = start
        resolutions, flags = [], []
        for _ in range(5):
            upsample = resolution < image_size
            if upsample:
                resolution *= 2
            resolutions.append(resolution)
            flags.append(upsample)
        if resolution != image_size:
            raise ConfigError(
                f"generator: upsampling from {start} reaches {resolution}, not the image size {image_size}"
            )
        return resolutions, flags

    def _resolve_skip_stage(self, requested: Optional[int]) -> int:
        if requested is None:
            for index, resolution in enumerate(self.stage_resolutions):
                if resolution == self.grid:
                    return index
            raise ConfigError(
                f"generator: no upsampling stage has the prior grid resolution {self.grid} "
                f"(stage resolutions {self.stage_resolutions})"
            )
        if self.stage_resolutions[requested] != self.grid:
            raise ConfigError(
                f"generator: skip_stage {requested} runs at {self.stage_resolutions[requested]}, "
                f"the prior grid is {self.grid}"
            )
        return requested

    def downsample(self, prior: Tensor) -> Tensor:
        """Prior grid (…, e, g, g) -> v (…, C₅, g/4, g/4)."""
        x = as_tensor(prior)
        if x.shape[-1] != self.grid or x.shape[-2] != self.grid:
            raise DimensionError(f"downsample: expected a {self.grid}×{self.grid} prior grid, got {x.shape}")
        for block in self.down_blocks:
            x = block(x)
        return x

    def upsample(self, v: Tensor, skip: Tensor) -> Tensor:
        """v and the prior grid -> I_r (…, C, H, W) in (0, 1)."""
        x = as_tensor(v)
        projected = self.skip_projection(as_tensor(skip))
        for index, (block, grow) in enumerate(zip(self.up_blocks, self.upsample_flags)):
            if grow:
                x = ops.upsample_nearest2x(x)
            if index == self.skip_stage:
                x = ops.concat([x, projected], axis=-3)
            x = block(x)
        return ops.sigmoid(self.head(x))

    def forward(self, priors: Tensor) -> Tensor:
        """V̂ (…, N, e) -> I_r."""
        grid = reshape_priors(priors)
        return self.upsample(self.downsample(grid), grid)


def compose_output(restored: np.ndarray, corrupted: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """
    Î = mask ⊙ I_r + (1 − mask) ⊙ I_corrupted.

    Args:
        restored: I_r, (…, C, H, W)
        corrupted: Corrupted input, same shape
        mask: (…, H, W) with 1 = missing

    Raises:
        DimensionError: If shapes disagree
    """
    restored, corrupted, mask = np.asarray(restored), np.asarray(corrupted), np.asarray(mask)
    if restored.shape != corrupted.shape or mask.shape[-2:] != restored.shape[-2:]:
        raise DimensionError(
            f"compose_output: restored {restored.shape}, corrupted {corrupted.shape}, mask {mask.shape}"
        )
    chosen = np.expand_dims(mask.astype(bool), axis=-3)
    return np.where(chosen, restored, corrupted)
