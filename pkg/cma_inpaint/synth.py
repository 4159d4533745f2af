# -*- coding: utf-8 -*-

"""
Procedural captioned-shapes dataset.

Each sample is a textured background with 1–3 colored squares, circles or
triangles, a template caption naming every shape's color, kind and coarse
location ("a red square top-left and a blue circle center"), and the
shapes' pixel bounding boxes. A sample is a pure function of its seed.
"""

import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from cma_inpaint.exceptions import DataError
from cma_inpaint.imageio import write_image
from cma_inpaint.masks import Box
from cma_inpaint.models import SynthConfig
from cma_inpaint.tokenizer import COLOR_WORDS, LOCATION_WORDS, SHAPE_WORDS, build_vocab, tokenize
from cma_inpaint.utils import derive_seed

# RGB of each color word, same order as COLOR_WORDS
COLOR_RGB: Dict[str, Tuple[float, float, float]] = {
    "red": (0.90, 0.10, 0.10),
    "green": (0.10, 0.75, 0.20),
    "blue": (0.15, 0.25, 0.90),
    "yellow": (0.95, 0.90, 0.10),
    "magenta": (0.90, 0.15, 0.85),
    "cyan": (0.10, 0.85, 0.90),
    "orange": (0.95, 0.55, 0.10),
    "purple": (0.50, 0.15, 0.70),
}

MANIFEST_NAME = "manifest.tsv"


@dataclass(frozen=True)
class Sample:
    """
    One training record.

    Attributes:
        image: float32 C×H×W in [0, 1]
        caption: Caption text
        tokens: int64 ids of length max_seq_len
        boxes: Shape bounding boxes (x0, y0, x1, y1), end-exclusive
        seed: Seed the sample was generated from
    """

    image: np.ndarray
    caption: str
    tokens: np.ndarray
    boxes: Tuple[Box, ...]
    seed: int


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    base = rng.uniform(0.25, 0.75, size=(3, 1, 1))
    freq = rng.uniform(0.5, 3.0, size=2) / size
    phase = rng.uniform(0.0, 2.0 * np.pi)
    ys, xs = np.mgrid[0:size, 0:size]
    stripes = 0.08 * np.sin(2.0 * np.pi * (freq[0] * xs + freq[1] * ys) + phase)
    noise = rng.normal(0.0, 0.02, size=(3, size, size))
    return np.clip(base + stripes[None] + noise, 0.0, 1.0)


def _shape_pixels(kind: str, x0: int, y0: int, side: int, size: int) -> np.ndarray:
    """Boolean H×W footprint of one shape inside the square (x0, y0, side)."""
    ys, xs = np.mgrid[0:size, 0:size]
    px, py = xs + 0.5, ys + 0.5
    inside = (px >= x0) & (px < x0 + side) & (py >= y0) & (py < y0 + side)
    if kind == "square":
        return inside
    cx, cy, radius = x0 + side / 2.0, y0 + side / 2.0, side / 2.0
    if kind == "circle":
        return inside & ((px - cx) ** 2 + (py - cy) ** 2 <= radius * radius)
    # triangle: apex at top center, base on the bottom edge
    depth = (py - y0) / side
    return inside & (np.abs(px - cx) <= depth * radius)


def _location_word(box: Box, size: int) -> str:
    cx = (box[0] + box[2]) / 2.0
    cy = (box[1] + box[3]) / 2.0
    col = min(2, int(3 * cx / size))
    row = min(2, int(3 * cy / size))
    return LOCATION_WORDS[3 * row + col]


def synth_sample(seed: int, cfg: SynthConfig) -> Sample:
    """
    Generates one captioned-shapes sample.

    Args:
        seed: Sample seed (same seed, same sample, bit for bit)
        cfg: Dataset configuration

    Returns:
        Sample with 1 to 3 shapes (cfg.min_shapes..cfg.max_shapes)
    """
    rng = np.random.default_rng(seed)
    size = cfg.image_size
    image = _background(rng, size)
    count = int(rng.integers(cfg.min_shapes, cfg.max_shapes + 1))
    phrases: List[str] = []
    boxes: List[Box] = []
    for _ in range(count):
        color = COLOR_WORDS[int(rng.integers(len(COLOR_WORDS)))]
        kind = SHAPE_WORDS[int(rng.integers(len(SHAPE_WORDS)))]
        side = int(rng.integers(max(4, size // 6), size // 3 + 1))
        x0 = int(rng.integers(0, size - side + 1))
        y0 = int(rng.integers(0, size - side + 1))
        pixels = _shape_pixels(kind, x0, y0, side, size)
        image[:, pixels] = np.asarray(COLOR_RGB[color])[:, None]
        rows = np.flatnonzero(pixels.any(axis=1))
        cols = np.flatnonzero(pixels.any(axis=0))
        box = (int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)
        boxes.append(box)
        phrases.append(f"a {color} {kind} {_location_word(box, size)}")
    caption = " and ".join(phrases)
    tokens = np.asarray(tokenize(caption, build_vocab(), cfg.max_seq_len), dtype=np.int64)
    return Sample(
        image=image.astype(np.float32),
        caption=caption,
        tokens=tokens,
        boxes=tuple(boxes),
        seed=int(seed),
    )


class SynthDataset:
    """
    n samples derived from a base seed; sample i uses derive_seed(base_seed, i).

    Samples are cached after first synthesis. The cache is guarded by a
    lock, so loader worker threads may index the dataset concurrently.
    """

    def __init__(self, cfg: SynthConfig, base_seed: int, n: Optional[int] = None):
        self.cfg = cfg
        self.base_seed = int(base_seed)
        self.n = cfg.n_samples if n is None else int(n)
        self._cache: Dict[int, Sample] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self.n

    def seed_of(self, index: int) -> int:
        return derive_seed(self.base_seed, index)

    def __getitem__(self, index: int) -> Sample:
        if not 0 <= index < self.n:
            raise IndexError(f"sample index {index} outside [0, {self.n})")
        with self._lock:
            cached = self._cache.get(index)
        if cached is not None:
            return cached
        sample = synth_sample(self.seed_of(index), self.cfg)
        with self._lock:
            return self._cache.setdefault(index, sample)


# ==================================================================================================
# Manifest
# ==================================================================================================

@dataclass(frozen=True)
class ManifestRecord:
    seed: int
    caption: str
    boxes: Tuple[Box, ...]


def format_manifest_line(sample: Sample) -> str:
    boxes = ";".join(",".join(str(v) for v in box) for box in sample.boxes)
    return f"{sample.seed}\t{sample.caption}\t{boxes}"


def parse_manifest_line(line: str, where: str = "<manifest>") -> ManifestRecord:
    """
    Parses `seed<TAB>caption<TAB>x0,y0,x1,y1;...`.

    Raises:
        DataError: On a malformed line (message carries `where`)
    """
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 3:
        raise DataError(f"{where}: expected 3 tab-separated fields, got {len(parts)}")
    seed_text, caption, boxes_text = parts
    try:
        seed = int(seed_text)
        boxes = tuple(
            tuple(int(v) for v in chunk.split(","))
            for chunk in boxes_text.split(";")
            if chunk
        )
    except ValueError:
        raise DataError(f"{where}: malformed seed or boxes in {line.strip()!r}") from None
    if any(len(box) != 4 for box in boxes):
        raise DataError(f"{where}: every box needs 4 integers")
    return ManifestRecord(seed=seed, caption=caption, boxes=boxes)  # type: ignore[arg-type]


def read_manifest(path: Union[str, Path]) -> List[ManifestRecord]:
    """Reads every record of a manifest file (raises DataError naming path:line)."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from None
    return [
        parse_manifest_line(line, where=f"{path}:{number}")
        for number, line in enumerate(lines, start=1)
        if line.strip()
    ]


def write_dataset(dataset: Union[SynthDataset, Sequence[Sample]], out_dir: Union[str, Path]) -> Path:
    """
    Writes images as {index:05d}.ppm and a manifest.tsv describing them.

    Returns:
        Path of the manifest
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for index in range(len(dataset)):
        sample = dataset[index]
        write_image(out_dir / f"{index:05d}.ppm", sample.image)
        lines.append(format_manifest_line(sample))
    manifest = out_dir / MANIFEST_NAME
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"[Synth] Wrote {len(lines)} samples to {out_dir}")
    return manifest
