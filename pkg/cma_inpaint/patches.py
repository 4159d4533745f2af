# -*- coding: utf-8 -*-

"""
Image <-> patch-sequence conversion.

A C×H×W image becomes N = (H·W)/P² rows in row-major patch order; each
row is the patch flattened in (row, column, channel) order, length P²·C.
Leading batch axes are carried through unchanged.
"""

import math

import numpy as np

from cma_inpaint.exceptions import DimensionError


def patchify(image: np.ndarray, patch: int) -> np.ndarray:
    """
    Slices an image into flattened patches.

    Args:
        image: (..., C, H, W)
        patch: Patch side P

    Returns:
        (..., N, P²·C)

    Raises:
        DimensionError: If P does not divide H and W
    """
    *lead, channels, height, width = image.shape
    if patch < 1 or height % patch or width % patch:
        raise DimensionError(f"patchify: patch size {patch} does not divide image {height}×{width}")
    gh, gw = height // patch, width // patch
    blocks = image.reshape(*lead, channels, gh, patch, gw, patch)
    k = len(lead)
    order = tuple(range(k)) + (k + 1, k + 3, k + 2, k + 4, k)
    return blocks.transpose(order).reshape(*lead, gh * gw, patch * patch * channels)


def unpatchify(rows: np.ndarray, patch: int, channels: int, height: int, width: int) -> np.ndarray:
    """
    Inverse of patchify.

    Raises:
        DimensionError: If the row count or row length does not match the geometry
    """
    *lead, count, dim = rows.shape
    if height % patch or width % patch:
        raise DimensionError(f"unpatchify: patch size {patch} does not divide image {height}×{width}")
    gh, gw = height // patch, width // patch
    if count != gh * gw or dim != patch * patch * channels:
        raise DimensionError(
            f"unpatchify: rows {rows.shape} do not match {channels}×{height}×{width} with P={patch}"
        )
    blocks = rows.reshape(*lead, gh, gw, patch, patch, channels)
    k = len(lead)
    order = tuple(range(k)) + (k + 4, k, k + 2, k + 1, k + 3)
    return blocks.transpose(order).reshape(*lead, channels, height, width)


def grid_side(num_patches: int) -> int:
    """Side of the square patch grid; raises DimensionError for a non-square count."""
    side = math.isqrt(num_patches)
    if side * side != num_patches:
        raise DimensionError(f"patch count {num_patches} is not a perfect square")
    return side
