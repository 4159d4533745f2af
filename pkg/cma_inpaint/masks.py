# -*- coding: utf-8 -*-

"""
Mask protocols: the centered square mask and the object-box mask.

A Mask grid holds 1 for missing pixels. Corrupted images have their
missing pixels set to MASK_FILL_VALUE (neutral gray); the transformer
sees a patch as missing when more than half of its pixels are.
"""

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from cma_inpaint.config import MASK_FILL_VALUE
from cma_inpaint.exceptions import DataError, DimensionError

Box = Tuple[int, int, int, int]


@dataclass(frozen=True)
class Mask:
    """
    Binary H×W grid, 1 = missing.

    Attributes:
        grid: float32 array with values in {0, 1}
    """

    grid: np.ndarray

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid)
        if grid.ndim != 2:
            raise DataError(f"mask grid must be 2-D, got shape {grid.shape}")
        if not np.isin(grid, (0, 1)).all():
            raise DataError("mask grid values must be 0 or 1")
        object.__setattr__(self, "grid", grid.astype(np.float32))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.grid.shape

    @property
    def area_fraction(self) -> float:
        return float(self.grid.sum()) / self.grid.size

    @property
    def is_empty(self) -> bool:
        return not self.grid.any()


def center_mask(height: int, width: int, area_fraction: float = 0.5) -> Mask:
    """
    Centered square mask covering about `area_fraction` of the image.

    The side is s = round(√(area_fraction·H·W)) with halves rounded up; when
    H − s is odd the extra row goes below (and the extra column right).

    Raises:
        DataError: If area_fraction ∉ (0, 1], s == 0 or s exceeds the image
    """
    if not 0.0 < area_fraction <= 1.0:
        raise DataError(f"area_fraction must lie in (0, 1], got {area_fraction}")
    side = math.floor(math.sqrt(area_fraction * height * width) + 0.5)
    if side == 0:
        raise DataError(f"center mask of {area_fraction:.3g} on {height}×{width} has zero side")
    if side > min(height, width):
        raise DataError(f"center mask side {side} does not fit in {height}×{width}")
    top, left = (height - side) // 2, (width - side) // 2
    grid = np.zeros((height, width), dtype=np.float32)
    grid[top:top + side, left:left + side] = 1.0
    return Mask(grid)


def object_mask(height: int, width: int, boxes: Sequence[Box]) -> Mask:
    """
    Union of object boxes (x0, y0, x1, y1), end-exclusive.

    Raises:
        DataError: If no boxes are given or a box is degenerate/out of bounds
    """
    if not boxes:
        raise DataError("object mask needs at least one box")
    grid = np.zeros((height, width), dtype=np.float32)
    for box in boxes:
        x0, y0, x1, y1 = (int(v) for v in box)
        if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
            raise DataError(f"box {tuple(box)} is degenerate or outside {height}×{width}")
        grid[y0:y1, x0:x1] = 1.0
    return Mask(grid)


def apply_mask(image: np.ndarray, mask: Mask) -> np.ndarray:
    """
    Sets masked pixels of a C×H×W image to MASK_FILL_VALUE.

    Raises:
        DimensionError: If the mask grid does not match the image plane
    """
    if image.shape[-2:] != mask.shape:
        raise DimensionError(f"apply_mask: image {image.shape} and mask {mask.shape} disagree")
    fill = np.asarray(MASK_FILL_VALUE, dtype=image.dtype)
    return np.where(mask.grid.astype(bool), fill, image)


def patch_mask(mask: Mask, patch: int) -> np.ndarray:
    """
    Patch-level mask in row-major patch order.

    A patch is masked iff strictly more than half of its P² pixels are masked.

    Returns:
        Boolean array of length N = (H·W)/P²
    """
    height, width = mask.shape
    if height % patch or width % patch:
        raise DimensionError(f"patch_mask: patch size {patch} does not divide {height}×{width}")
    counts = mask.grid.reshape(height // patch, patch, width // patch, patch).sum(axis=(1, 3))
    return (2 * counts > patch * patch).reshape(-1)


def mask_for(mode: str, height: int, width: int, boxes: Sequence[Box], area_fraction: float = 0.5) -> Mask:
    """Mask of the configured protocol ("center" or "object")."""
    if mode == "center":
        return center_mask(height, width, area_fraction)
    if mode == "object":
        return object_mask(height, width, boxes)
    raise DataError(f"unknown mask mode '{mode}'")


def mask_bbox(mask: Mask) -> Box:
    """
    Tight bounding box (x0, y0, x1, y1) of the masked pixels.

    Raises:
        DataError: If the mask is empty
    """
    if mask.is_empty:
        raise DataError("bounding box of an empty mask is undefined")
    rows = np.flatnonzero(mask.grid.any(axis=1))
    cols = np.flatnonzero(mask.grid.any(axis=0))
    return int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1
