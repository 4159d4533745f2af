# -*- coding: utf-8 -*-

"""
Unit tests for seed derivation, fingerprints, run ids and atomic writes.
"""

import os
from unittest.mock import patch

import numpy as np
import pytest

from cma_inpaint.nn import Linear
from cma_inpaint.utils import (
    atomic_write_bytes,
    derive_seed,
    generate_run_id,
    make_rng,
    parameter_fingerprint,
)


class TestSeeds:
    """Tests for derive_seed/make_rng."""

    def test_deterministic(self):
        """
        What it does: Derives the same seed twice.
        Purpose: Ensure the derivation is a pure function.
        """
        assert derive_seed(17, 3) == derive_seed(17, 3)
        np.testing.assert_array_equal(make_rng(17, 3).normal(size=4), make_rng(17, 3).normal(size=4))

    def test_keys_give_distinct_streams(self):
        """
        What it does: Derives seeds for neighbouring keys and bases.
        Purpose: Ensure sub-streams do not collide.
        """
        seeds = {derive_seed(17, k) for k in range(100)} | {derive_seed(18, 0), derive_seed(17)}
        print(f"Distinct seeds: {len(seeds)}")
        assert len(seeds) == 102

    def test_unsigned_64_bit(self):
        """
        What it does: Checks the range of derived seeds.
        Purpose: Ensure seeds fit an unsigned 64-bit integer.
        """
        assert all(0 <= derive_seed(0, k) < 2 ** 64 for k in range(20))


class TestFingerprint:
    """Tests for parameter_fingerprint."""

    def test_changes_with_parameters(self, rng):
        """
        What it does: Fingerprints a layer before and after changing a weight.
        Purpose: Ensure any parameter change alters the digest.
        """
        layer = Linear(3, 2, rng)
        before = parameter_fingerprint(layer)
        assert parameter_fingerprint([layer]) == before
        layer.weight.data[0, 0] += 1.0
        assert parameter_fingerprint(layer) != before

    def test_order_matters(self, rng):
        """
        What it does: Fingerprints two layers in both orders.
        Purpose: Ensure modules are hashed in the given order.
        """
        a, b = Linear(3, 2, rng), Linear(3, 2, rng)
        assert parameter_fingerprint([a, b]) != parameter_fingerprint([b, a])


class TestRunId:
    """Tests for generate_run_id."""

    def test_format_and_uniqueness(self):
        """
        What it does: Generates two run ids.
        Purpose: Ensure the run-<12 hex> format and distinct values.
        """
        first, second = generate_run_id(), generate_run_id()
        assert first.startswith("run-") and len(first) == 16
        int(first[4:], 16)
        assert first != second


class TestAtomicWrite:
    """Tests for atomic_write_bytes."""

    def test_writes_and_creates_parents(self, tmp_path):
        """
        What it does: Writes into a directory that does not exist yet.
        Purpose: Ensure the file holds the payload and no temporary file remains.
        """
        path = tmp_path / "a" / "b" / "file.bin"
        atomic_write_bytes(path, b"payload")
        assert path.read_bytes() == b"payload"
        assert os.listdir(path.parent) == ["file.bin"]

    def test_failed_write_keeps_previous_file(self, tmp_path):
        """
        What it does: Fails the rename of a second write.
        Purpose: Ensure the previous content survives and the temporary file is removed.
        """
        path = tmp_path / "state.bin"
        atomic_write_bytes(path, b"old")
        with patch("cma_inpaint.utils.os.replace", side_effect=OSError("disk full")):
            with pytest.raises(OSError, match="disk full"):
                atomic_write_bytes(path, b"new")
        assert path.read_bytes() == b"old"
        assert os.listdir(tmp_path) == ["state.bin"]
