# -*- coding: utf-8 -*-

"""
Closed-vocabulary caption tokenizer.

Captions of the synthetic dataset are template sentences over a fixed
64-word vocabulary, so tokenization is a lowercase whitespace split with
[UNK] for anything outside it. Ids are dense: [PAD]=0, [UNK]=1, [CLS]=2,
then the words in the order listed below.
"""

from functools import lru_cache
from typing import Dict, Iterable, List, Sequence

from loguru import logger

from cma_inpaint.config import CLS_TOKEN, PAD_TOKEN, RESERVED_TOKENS, UNK_TOKEN
from cma_inpaint.exceptions import DataError

COLOR_WORDS: List[str] = ["red", "green", "blue", "yellow", "magenta", "cyan", "orange", "purple"]

SHAPE_WORDS: List[str] = ["square", "circle", "triangle"]

# Coarse 3×3 location grid, row-major
LOCATION_WORDS: List[str] = [
    "top-left", "top", "top-right",
    "left", "center", "right",
    "bottom-left", "bottom", "bottom-right",
]

FILLER_WORDS: List[str] = [
    "a", "an", "and", "the", "in", "at", "on", "of", "with", "is", "are", "there",
    "image", "picture", "shape", "shapes", "object", "objects", "small", "large", "big",
    "tiny", "corner", "middle", "side", "near", "above", "below", "next", "to",
    "background", "textured", "one", "two", "three", "dark", "light", "bright",
    "squares", "circles", "triangles",
]

VOCAB_SIZE: int = 64


class Vocab:
    """
    Token <-> id map with the reserved tokens at fixed ids 0, 1, 2.

    Example:
        >>> vocab = build_vocab()
        >>> vocab.id("red")
        3
    """

    def __init__(self, tokens: Sequence[str]):
        if list(tokens[: len(RESERVED_TOKENS)]) != RESERVED_TOKENS:
            raise DataError(f"vocabulary must start with {RESERVED_TOKENS}")
        self.tokens: List[str] = list(tokens)
        self.token_to_id: Dict[str, int] = {}
        for index, token in enumerate(self.tokens):
            if token in self.token_to_id:
                raise DataError(f"duplicate vocabulary token '{token}'")
            self.token_to_id[token] = index

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD_TOKEN]

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK_TOKEN]

    @property
    def cls_id(self) -> int:
        return self.token_to_id[CLS_TOKEN]

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, self.unk_id)

    def token(self, index: int) -> str:
        if not 0 <= index < len(self.tokens):
            raise DataError(f"token id {index} outside [0, {len(self.tokens)})")
        return self.tokens[index]


@lru_cache(maxsize=1)
def build_vocab() -> Vocab:
    """Builds the fixed 64-token caption vocabulary."""
    vocab = Vocab(RESERVED_TOKENS + COLOR_WORDS + SHAPE_WORDS + LOCATION_WORDS + FILLER_WORDS)
    logger.debug(f"[Tokenizer] Built vocabulary with {len(vocab)} tokens")
    return vocab


def tokenize(text: str, vocab: Vocab, max_len: int) -> List[int]:
    """
    Converts a caption to a fixed-length id list.

    Lowercase whitespace split, [CLS] prepended, [UNK] for out-of-vocabulary
    words, truncated to max_len and [PAD]-filled up to max_len.

    Args:
        text: Caption
        vocab: Vocabulary
        max_len: Output length (≥ 1)

    Returns:
        Exactly max_len ids
    """
    if max_len < 1:
        raise ValueError(f"max_len must be ≥ 1, got {max_len}")
    ids = [vocab.cls_id] + [vocab.id(word) for word in text.lower().split()]
    ids = ids[:max_len]
    return ids + [vocab.pad_id] * (max_len - len(ids))


def detokenize(ids: Iterable[int], vocab: Vocab) -> str:
    """Inverse of tokenize up to [UNK]: drops [CLS] and [PAD], joins with spaces."""
    skip = {vocab.cls_id, vocab.pad_id}
    return " ".join(vocab.token(int(i)) for i in ids if int(i) not in skip)


def token_mask(ids: Sequence[int], vocab: Vocab) -> List[bool]:
    """True for every non-[PAD] position."""
    return [int(i) != vocab.pad_id for i in ids]
