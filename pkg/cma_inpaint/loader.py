# -*- coding: utf-8 -*-

"""
Deterministic batching and the bounded prefetch loader.

The sample order is a pure function of the step: step s, slot b reads
global position p = s·B + b, which is sample perm_e[p mod n] of epoch
e = p div n, where perm_e is a permutation seeded by (seed, e). Resuming
at any step therefore continues the exact same stream.
"""

from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Deque, Dict, Iterator, List, Tuple

import numpy as np
from loguru import logger

from cma_inpaint.masks import Box, apply_mask, mask_for, patch_mask
from cma_inpaint.patches import patchify
from cma_inpaint.synth import Sample, SynthDataset
from cma_inpaint.utils import derive_seed


@dataclass
class Batch:
    """
    Stacked training inputs of one step.

    Attributes:
        images: Ground truth, B×C×H×W
        corrupted: Images with masked pixels set to the fill value, B×C×H×W
        masks: Pixel masks, B×H×W (1 = missing)
        patches_original: patchify(images), B×N×(P²·C)
        patches_corrupted: patchify(corrupted), B×N×(P²·C)
        patch_masks: B×N booleans (patch counted as missing)
        tokens: Caption ids, B×L
        seeds: Sample seeds
        captions: Caption texts
        boxes: Object boxes per sample
    """

    images: np.ndarray
    corrupted: np.ndarray
    masks: np.ndarray
    patches_original: np.ndarray
    patches_corrupted: np.ndarray
    patch_masks: np.ndarray
    tokens: np.ndarray
    seeds: List[int]
    captions: List[str]
    boxes: List[Tuple[Box, ...]]

    def __len__(self) -> int:
        return self.images.shape[0]


def make_batch(samples: List[Sample], patch: int, mask_mode: str, mask_area: float = 0.5) -> Batch:
    """Masks, corrupts and patchifies a list of samples."""
    if not samples:
        raise ValueError("make_batch: empty sample list")
    images = np.stack([s.image for s in samples])
    height, width = images.shape[-2:]
    masks = [mask_for(mask_mode, height, width, s.boxes, mask_area) for s in samples]
    corrupted = np.stack([apply_mask(s.image, m) for s, m in zip(samples, masks)])
    return Batch(
        images=images,
        corrupted=corrupted,
        masks=np.stack([m.grid for m in masks]),
        patches_original=patchify(images, patch),
        patches_corrupted=patchify(corrupted, patch),
        patch_masks=np.stack([patch_mask(m, patch) for m in masks]),
        tokens=np.stack([s.tokens for s in samples]),
        seeds=[s.seed for s in samples],
        captions=[s.caption for s in samples],
        boxes=[s.boxes for s in samples],
    )


class BatchSchedule:
    """Maps a 0-based step index to the dataset indices of its batch."""

    def __init__(self, n: int, batch_size: int, seed: int):
        if n < 1 or batch_size < 1:
            raise ValueError(f"BatchSchedule needs n ≥ 1 and batch_size ≥ 1, got {n}, {batch_size}")
        self.n = n
        self.batch_size = batch_size
        self.seed = seed
        self._perms: Dict[int, np.ndarray] = {}

    def _permutation(self, epoch: int) -> np.ndarray:
        perm = self._perms.get(epoch)
        if perm is None:
            perm = np.random.default_rng(derive_seed(self.seed, epoch)).permutation(self.n)
            self._perms = {epoch: perm, **{e: p for e, p in self._perms.items() if e >= epoch - 1}}
        return perm

    def indices(self, step: int) -> List[int]:
        out = []
        for slot in range(self.batch_size):
            position = step * self.batch_size + slot
            epoch, offset = divmod(position, self.n)
            out.append(int(self._permutation(epoch)[offset]))
        return out


class BatchLoader:
    """
    Yields (step, Batch) for steps start..stop-1 in order.

    With workers > 0 batches are synthesized on a thread pool with at most
    `depth` batches in flight; results are consumed in submission order, so
    the stream is identical to the inline (workers == 0) stream.
    """

    def __init__(
        self,
        dataset: SynthDataset,
        schedule: BatchSchedule,
        patch: int,
        mask_mode: str,
        mask_area: float = 0.5,
        workers: int = 0,
        depth: int = 4,
    ):
        self.dataset = dataset
        self.schedule = schedule
        self.patch = patch
        self.mask_mode = mask_mode
        self.mask_area = mask_area
        self.workers = max(0, workers)
        self.depth = max(1, depth)

    def batch_for(self, step: int) -> Batch:
        samples = [self.dataset[i] for i in self.schedule.indices(step)]
        return make_batch(samples, self.patch, self.mask_mode, self.mask_area)

    def iterate(self, start: int, stop: int) -> Iterator[Tuple[int, Batch]]:
        if self.workers == 0:
            for step in range(start, stop):
                yield step, self.batch_for(step)
            return

        logger.debug(f"[Loader] Prefetching with {self.workers} workers, depth {self.depth}")
        pending: Deque[Tuple[int, Future]] = deque()
        next_step = start
        with ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix="cma-loader") as pool:
            try:
                while pending or next_step < stop:
                    while next_step < stop and len(pending) < self.depth:
                        pending.append((next_step, pool.submit(self.batch_for, next_step)))
                        next_step += 1
                    step, future = pending.popleft()
                    yield step, future.result()
            finally:
                for _, future in pending:
                    future.cancel()

