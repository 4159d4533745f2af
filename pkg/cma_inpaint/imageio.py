# -*- coding: utf-8 -*-

"""
Image file I/O with Pillow.

Images are float32 C×H×W arrays in [0, 1] in memory and 8-bit files on
disk: binary PPM (P6, maxval 255) for `.ppm`, PNG for `.png`.
"""

from pathlib import Path
from typing import Union

import numpy as np
from loguru import logger
from PIL import Image, UnidentifiedImageError

from cma_inpaint.exceptions import DataError
from cma_inpaint.masks import Mask

PathLike = Union[str, Path]


def to_uint8(image: np.ndarray) -> np.ndarray:
    """C×H×W floats in [0, 1] -> H×W×C bytes (round to nearest)."""
    return np.ascontiguousarray(np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0))


def write_image(path: PathLike, image: np.ndarray) -> None:
    """Writes a 3-channel C×H×W image; the format follows the suffix (.ppm or .png)."""
    path = Path(path)
    if image.ndim != 3 or image.shape[0] != 3:
        raise DataError(f"write_image: expected 3×H×W, got {image.shape} for {path}")
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(image)).save(path)
    logger.debug(f"[ImageIO] Wrote {path}")


def read_image(path: PathLike) -> np.ndarray:
    """
    Reads an RGB image as float32 3×H×W in [0, 1].

    Raises:
        DataError: If the file is missing or not a readable image (message carries the path)
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            data = np.asarray(img.convert("RGB"), dtype=np.float32)
    except (OSError, UnidentifiedImageError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from None
    return (data / 255.0).transpose(2, 0, 1).copy()


def write_mask(path: PathLike, mask: Mask) -> None:
    """Writes a mask as a grayscale image (255 = missing)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray((mask.grid * 255).astype(np.uint8)).save(path)


def read_mask(path: PathLike) -> Mask:
    """
    Reads a mask image; pixels brighter than mid-gray are missing.

    Raises:
        DataError: If the file is missing or not a readable image
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            data = np.asarray(img.convert("L"))
    except (OSError, UnidentifiedImageError) as exc:
        raise DataError(f"cannot read mask {path}: {exc}") from None
    return Mask((data > 127).astype(np.float32))
