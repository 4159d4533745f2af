# -*- coding: utf-8 -*-

"""
Utility functions for cma_inpaint.

Contains seed derivation, parameter fingerprints, run identifiers and
atomic file writes.
"""

import hashlib
import os
import tempfile
import uuid
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Union

import numpy as np
from loguru import logger

if TYPE_CHECKING:
    from cma_inpaint.nn import Module


def derive_seed(base: int, *keys: int) -> int:
    """
    Derives an independent 64-bit seed from a base seed and integer keys.

    Used so that sample i of a dataset, the mask of step k, or the weights
    of a sub-network each get their own stream without collisions.

    Args:
        base: Base seed
        keys: Integer path (e.g. sample index)

    Returns:
        Unsigned 64-bit seed
    """
    sequence = np.random.SeedSequence([int(base), *(int(k) for k in keys)])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def make_rng(base: int, *keys: int) -> np.random.Generator:
    """Returns a PCG64 generator seeded by derive_seed(base, *keys)."""
    return np.random.default_rng(derive_seed(base, *keys))


def parameter_fingerprint(modules: Union["Module", Iterable["Module"]]) -> str:
    """
    SHA256 over the names, shapes and bytes of every parameter.

    Used to assert that an update touched only the intended networks.

    Args:
        modules: One module or several (hashed in the given order)

    Returns:
        Hex digest
    """
    from cma_inpaint.nn import Module

    if isinstance(modules, Module):
        modules = [modules]
    digest = hashlib.sha256()
    for module in modules:
        for name, param in module.named_parameters():
            digest.update(name.encode())
            digest.update(str(param.shape).encode())
            digest.update(np.ascontiguousarray(param.data).tobytes())
    return digest.hexdigest()


def generate_run_id() -> str:
    """
    Generates a unique ID for a training run.

    Returns:
        ID in format "run-{uuid_hex[:12]}"
    """
    return f"run-{uuid.uuid4().hex[:12]}"


def atomic_write_bytes(path: Union[str, Path], payload: bytes) -> None:
    """
    Writes `payload` to `path` via a temporary file and an atomic rename.

    A crash (or full disk) mid-write leaves the previous file intact.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            logger.warning(f"Failed to remove temporary file {tmp_name}")
        raise
