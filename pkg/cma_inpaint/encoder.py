# -*- coding: utf-8 -*-

"""
Joint vision-and-language transformer encoder.

Text ids and image patches are embedded separately, concatenated into one
sequence [T̄; V̄] and encoded by a pre-norm transformer stack with full
cross-modal self-attention. The output is split back into the text
representations T̂ (first L rows) and the visual priors V̂ (last N rows).

All methods accept unbatched (L, N×D) or batched (B×L, B×N×D) inputs.
"""

from typing import NamedTuple, Optional

import numpy as np
from loguru import logger

from cma_inpaint import ops
from cma_inpaint.exceptions import DimensionError, NumericError
from cma_inpaint.models import EncoderConfig
from cma_inpaint.nn import Embedding, LayerNorm, Linear, Module, Parameter
from cma_inpaint.tensor import Tensor, as_tensor

# Additive attention bias of padded keys
_MASKED_KEY_BIAS = -1e9

TEXT_TYPE = 0
IMAGE_TYPE = 1


class EncoderOutput(NamedTuple):
    """T̂: (…, L, e) text representations; V̂: (…, N, e) reconstructed visual priors."""

    text: Tensor
    visual: Tensor


class SelfAttention(Module):
    def __init__(self, hidden: int, heads: int, rng: np.random.Generator):
        super().__init__()
        self.heads = heads
        self.head_dim = hidden // heads
        self.query = Linear(hidden, hidden, rng)
        self.key = Linear(hidden, hidden, rng)
        self.value = Linear(hidden, hidden, rng)
        self.out = Linear(hidden, hidden, rng)
        self.last_attention: Optional[np.ndarray] = None

    def _split_heads(self, x: Tensor) -> Tensor:
        batch, length, _ = x.shape
        return ops.transpose(ops.reshape(x, (batch, length, self.heads, self.head_dim)), (0, 2, 1, 3))

    def forward(self, x: Tensor, key_bias: Optional[np.ndarray] = None) -> Tensor:
        batch, length, hidden = x.shape
        q = self._split_heads(self.query(x))
        k = self._split_heads(self.key(x))
        v = self._split_heads(self.value(x))
        scores = ops.mul(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), self.head_dim ** -0.5)
        if key_bias is not None:
            scores = ops.add(scores, Tensor(key_bias[:, None, None, :], dtype=scores.dtype))
        attention = ops.softmax(scores, axis=-1)
        self.last_attention = attention.data
        mixed = ops.transpose(ops.matmul(attention, v), (0, 2, 1, 3))
        return self.out(ops.reshape(mixed, (batch, length, hidden)))


class EncoderBlock(Module):
    """x + Attn(LN(x)), then x + FFN(LN(x)) with an exact-GELU FFN."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        self.norm1 = LayerNorm(cfg.hidden)
        self.attn = SelfAttention(cfg.hidden, cfg.heads, rng)
        self.norm2 = LayerNorm(cfg.hidden)
        self.fc1 = Linear(cfg.hidden, cfg.ffn, rng)
        self.fc2 = Linear(cfg.ffn, cfg.hidden, rng)

    def forward(self, x: Tensor, key_bias: Optional[np.ndarray] = None) -> Tensor:
        x = ops.add(x, self.attn(self.norm1(x), key_bias))
        return ops.add(x, self.fc2(ops.gelu(self.fc1(self.norm2(x)))))


class VLEncoder(Module):
    """
    Vision-and-language encoder.

    Parameters: word/type embeddings, learned absolute text and image
    position embeddings, the patch projection, the learned [Vmask] vector,
    the transformer blocks and (when layers > 0) a final LayerNorm.
    """

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.word_embedding = Embedding(cfg.vocab_size, cfg.hidden, rng)
        self.type_embedding = Embedding(2, cfg.hidden, rng)
        self.text_position = Parameter(rng.normal(0.0, 0.02, size=(cfg.max_text_len, cfg.hidden)))
        self.image_position = Parameter(rng.normal(0.0, 0.02, size=(cfg.num_patches, cfg.hidden)))
        self.patch_projection = Linear(cfg.patch_dim, cfg.hidden, rng)
        self.vmask = Parameter(rng.normal(0.0, 0.02, size=(cfg.hidden,)))
        self.blocks = [EncoderBlock(cfg, rng) for _ in range(cfg.layers)]
        self.final_norm: Optional[LayerNorm] = LayerNorm(cfg.hidden) if cfg.layers > 0 else None
        logger.debug(
            f"[Encoder] e={cfg.hidden}, layers={cfg.layers}, heads={cfg.heads}, "
            f"L={cfg.max_text_len}, N={cfg.num_patches}, |V|={cfg.vocab_size}"
        )

    def _type_row(self, kind: int) -> Tensor:
        return ops.getitem(self.type_embedding.weight, kind)

    def embed_text(self, ids: np.ndarray) -> Tensor:
        """
        T̄ = word(ids) + text position + text type, shape (…, L, e).

        Raises:
            DimensionError: If an id is outside the vocabulary or L exceeds max_text_len
        """
        ids = np.asarray(ids, dtype=np.int64)
        length = ids.shape[-1]
        if length > self.cfg.max_text_len:
            raise DimensionError(f"embed_text: {length} tokens exceed max_text_len {self.cfg.max_text_len}")
        words = self.word_embedding(ids)
        positions = ops.getitem(self.text_position, slice(0, length))
        return ops.add(ops.add(words, positions), self._type_row(TEXT_TYPE))

    def embed_patches(self, patches: np.ndarray, patch_mask: np.ndarray) -> Tensor:
        """
        V̄ = LinearProj(V) with masked rows replaced by [Vmask], plus image position and type.

        Raises:
            DimensionError: If patch rows, patch count or mask shape disagree with the config
        """
        patches = as_tensor(patches)
        patch_mask = np.asarray(patch_mask, dtype=bool)
        if patches.shape[-2:] != (self.cfg.num_patches, self.cfg.patch_dim):
            raise DimensionError(
                f"embed_patches: expected (…, {self.cfg.num_patches}, {self.cfg.patch_dim}), got {patches.shape}"
            )
        if patch_mask.shape != patches.shape[:-1]:
            raise DimensionError(f"embed_patches: mask {patch_mask.shape} does not match patches {patches.shape}")
        projected = self.patch_projection(patches)
        m = Tensor(patch_mask[..., None], dtype=projected.dtype)
        keep = Tensor(1.0 - patch_mask[..., None], dtype=projected.dtype)
        mixed = ops.add(ops.mul(projected, keep), ops.mul(m, self.vmask))
        return ops.add(ops.add(mixed, self.image_position), self._type_row(IMAGE_TYPE))

    def encode(self, text: Tensor, visual: Tensor, text_pad: Optional[np.ndarray] = None) -> EncoderOutput:
        """
        Runs the transformer over [T̄; V̄] and splits the result into (T̂, V̂).

        Args:
            text: T̄, (…, L, e)
            visual: V̄, (…, N, e)
            text_pad: Optional (…, L) booleans, True for [PAD] positions (never attended to)

        Raises:
            NumericError: If a layer produces NaN/Inf (message names the layer index)
        """
        text, visual = as_tensor(text), as_tensor(visual)
        unbatched = text.ndim == 2
        if unbatched:
            text = ops.reshape(text, (1,) + text.shape)
            visual = ops.reshape(visual, (1,) + visual.shape)
            if text_pad is not None:
                text_pad = np.asarray(text_pad)[None]
        length = text.shape[1]
        x = ops.concat([text, visual], axis=1)

        key_bias = None
        if text_pad is not None and np.any(text_pad):
            pad = np.concatenate(
                [np.asarray(text_pad, dtype=bool), np.zeros((x.shape[0], visual.shape[1]), dtype=bool)], axis=1
            )
            key_bias = np.where(pad, _MASKED_KEY_BIAS, 0.0)

        for index, block in enumerate(self.blocks):
            try:
                x = block(x, key_bias)
            except NumericError as exc:
                raise NumericError(f"encoder layer {index}: {exc}", component=f"encoder.layer{index}") from exc
            if not np.all(np.isfinite(x.data)):
                raise NumericError(
                    f"encoder layer {index}: non-finite activations", component=f"encoder.layer{index}"
                )
        if self.final_norm is not None:
            x = self.final_norm(x)

        text_out = ops.getitem(x, (slice(None), slice(0, length)))
        visual_out = ops.getitem(x, (slice(None), slice(length, None)))
        if unbatched:
            text_out = ops.reshape(text_out, text_out.shape[1:])
            visual_out = ops.reshape(visual_out, visual_out.shape[1:])
        return EncoderOutput(text=text_out, visual=visual_out)

    def forward(
        self, tokens: np.ndarray, patches: np.ndarray, patch_mask: np.ndarray, pad_id: int = 0
    ) -> EncoderOutput:
        """Embeds and encodes one (batch of) caption/image pair(s)."""
        tokens = np.asarray(tokens, dtype=np.int64)
        return self.encode(self.embed_text(tokens), self.embed_patches(patches, patch_mask), tokens == pad_id)
