# -*- coding: utf-8 -*-

"""
Binary checkpoint format.

Layout (all integers little-endian):

    magic      4 bytes  b"CMA1"
    version    u32
    step       u64
    header     u32 length + UTF-8 JSON {"config": …, "meta": …} (sorted keys, compact)
    count      u32
    count × tensor entries:
        u16 name length, name (UTF-8), u8 ndim, ndim × u32 dims, float32 data (row-major)

Tensors are written in name order. Decoding and re-encoding a file
reproduces it byte for byte.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
from loguru import logger

from cma_inpaint.config import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from cma_inpaint.exceptions import CheckpointError
from cma_inpaint.utils import atomic_write_bytes

_FLOAT = np.dtype("<f4")


@dataclass
class Checkpoint:
    """
    Attributes:
        step: Completed training steps
        config: Config echo (plain JSON data, as produced by TrainConfig.model_dump)
        meta: Extra JSON state (optimizer step counters, run id)
        tensors: Named float32 arrays (parameters, optimizer moments, spectral-norm vectors)
    """

    step: int
    config: Dict[str, Any]
    meta: Dict[str, Any] = field(default_factory=dict)
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)

    def subset(self, prefix: str) -> Dict[str, np.ndarray]:
        """Tensors under `prefix.` with the prefix stripped."""
        head = prefix + "."
        return {name[len(head):]: value for name, value in self.tensors.items() if name.startswith(head)}


def _header_bytes(ckpt: Checkpoint) -> bytes:
    return json.dumps(
        {"config": ckpt.config, "meta": ckpt.meta}, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    parts = [CHECKPOINT_MAGIC, struct.pack("<IQ", CHECKPOINT_VERSION, ckpt.step)]
    header = _header_bytes(ckpt)
    parts.append(struct.pack("<I", len(header)))
    parts.append(header)
    parts.append(struct.pack("<I", len(ckpt.tensors)))
    for name in sorted(ckpt.tensors):
        value = np.ascontiguousarray(ckpt.tensors[name], dtype=_FLOAT)
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF or value.ndim > 0xFF:
            raise CheckpointError(f"cannot encode tensor {name!r} with shape {value.shape}")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack(f"<B{value.ndim}I", value.ndim, *value.shape))
        parts.append(value.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, payload: bytes, source: str):
        self.payload = payload
        self.source = source
        self.offset = 0

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.payload):
            raise CheckpointError(f"{self.source}: truncated at byte {self.offset} (needed {size} more)")
        chunk = self.payload[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(payload: bytes, source: str = "<bytes>") -> Checkpoint:
    """
    Raises:
        CheckpointError: On an unknown magic, unsupported version, truncation or trailing bytes
    """
    reader = _Reader(payload, source)
    magic = reader.take(4)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{source}: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
    version, step = reader.unpack("<IQ")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{source}: unsupported checkpoint version {version}")
    (header_len,) = reader.unpack("<I")
    try:
        header = json.loads(reader.take(header_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{source}: corrupt header ({exc})") from None
    (count,) = reader.unpack("<I")
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I")
        size = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(reader.take(size * _FLOAT.itemsize), dtype=_FLOAT).reshape(shape)
        tensors[name] = data.astype(np.float32)
    if reader.offset != len(payload):
        raise CheckpointError(f"{source}: {len(payload) - reader.offset} trailing bytes")
    return Checkpoint(step=step, config=header.get("config", {}), meta=header.get("meta", {}), tensors=tensors)


def save_checkpoint(path: Union[str, Path], ckpt: Checkpoint) -> Path:
    """Encodes and writes atomically (a failed write leaves the previous file intact)."""
    path = Path(path)
    payload = encode_checkpoint(ckpt)
    atomic_write_bytes(path, payload)
    logger.info(f"[Checkpoint] Saved step {ckpt.step} ({len(ckpt.tensors)} tensors, {len(payload)} bytes) to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    ckpt = decode_checkpoint(payload, str(path))
    logger.debug(f"[Checkpoint] Loaded step {ckpt.step} from {path}")
    return ckpt
