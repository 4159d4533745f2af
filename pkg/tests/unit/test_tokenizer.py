# -*- coding: utf-8 -*-

"""
Unit tests for the caption tokenizer.
"""

import pytest

from cma_inpaint.exceptions import DataError
from cma_inpaint.tokenizer import VOCAB_SIZE, Vocab, build_vocab, detokenize, token_mask, tokenize


class TestVocab:
    """Tests for the fixed vocabulary."""

    def test_size_and_reserved_ids(self):
        """
        What it does: Verifies the vocabulary size and reserved ids.
        Purpose: Ensure [PAD]=0, [UNK]=1, [CLS]=2 and 64 tokens in total.
        """
        vocab = build_vocab()
        print(f"Vocab size: {len(vocab)}")
        assert len(vocab) == VOCAB_SIZE == 64
        assert (vocab.pad_id, vocab.unk_id, vocab.cls_id) == (0, 1, 2)
        assert vocab.id("red") == 3

    def test_build_is_cached(self):
        """
        What it does: Calls build_vocab twice.
        Purpose: Ensure one shared instance.
        """
        assert build_vocab() is build_vocab()

    def test_duplicate_token_is_rejected(self):
        """
        What it does: Builds a vocabulary with a repeated word.
        Purpose: Ensure ids stay dense and unique.
        """
        with pytest.raises(DataError, match="duplicate"):
            Vocab(["[PAD]", "[UNK]", "[CLS]", "red", "red"])

    def test_missing_reserved_prefix(self):
        """
        What it does: Builds a vocabulary without the reserved tokens first.
        Purpose: Ensure fixed reserved ids.
        """
        with pytest.raises(DataError):
            Vocab(["red", "[PAD]", "[UNK]", "[CLS]"])

    def test_token_out_of_range(self):
        """
        What it does: Looks up id 64.
        Purpose: Ensure DataError names the valid range.
        """
        with pytest.raises(DataError, match=r"\[0, 64\)"):
            build_vocab().token(64)


class TestTokenize:
    """Tests for tokenize/detokenize."""

    def test_cls_prefix_and_padding(self):
        """
        What it does: Tokenizes a short caption.
        Purpose: Ensure [CLS] first and [PAD] fill to max_len.
        """
        vocab = build_vocab()
        ids = tokenize("A red square", vocab, 8)
        print(f"Ids: {ids}")
        assert len(ids) == 8
        assert ids[0] == vocab.cls_id
        assert ids[1:4] == [vocab.id("a"), vocab.id("red"), vocab.id("square")]
        assert ids[4:] == [vocab.pad_id] * 4

    def test_truncation(self):
        """
        What it does: Tokenizes a caption longer than max_len.
        Purpose: Ensure output length is exactly max_len.
        """
        ids = tokenize("red green blue yellow cyan", build_vocab(), 3)
        assert len(ids) == 3 and ids[0] == build_vocab().cls_id

    def test_unknown_words_map_to_unk(self):
        """
        What it does: Tokenizes an out-of-vocabulary word.
        Purpose: Ensure [UNK] replaces it.
        """
        vocab = build_vocab()
        assert tokenize("zebra", vocab, 2) == [vocab.cls_id, vocab.unk_id]

    def test_detokenize_inverts_in_vocabulary_text(self):
        """
        What it does: Tokenizes and detokenizes a caption.
        Purpose: Ensure the caption comes back lowercased.
        """
        vocab = build_vocab()
        assert detokenize(tokenize("The Blue circle at top-left", vocab, 12), vocab) == "the blue circle at top-left"

    def test_max_len_must_be_positive(self):
        """
        What it does: Tokenizes with max_len 0.
        Purpose: Ensure ValueError.
        """
        with pytest.raises(ValueError):
            tokenize("red", build_vocab(), 0)

    def test_token_mask_flags_padding(self):
        """
        What it does: Builds the key mask of a padded sequence.
        Purpose: Ensure attention can ignore [PAD] keys.
        """
        vocab = build_vocab()
        assert token_mask(tokenize("red", vocab, 4), vocab) == [True, True, False, False]
