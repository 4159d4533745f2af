# -*- coding: utf-8 -*-

"""
Common fixtures for testing cma_inpaint.

Provides the tiny run configuration, small synthetic batches and isolation
of the global debug logger. Every test works on temporary directories only.
"""

import os

import numpy as np
import pytest

from cma_inpaint.debug_logger import debug_logger
from cma_inpaint.loader import make_batch
from cma_inpaint.models import TrainConfig
from cma_inpaint.settings import build_config
from cma_inpaint.synth import SynthDataset


def pytest_collection_modifyitems(config, items):
    """Skips tests marked slow unless CMA_RUN_SLOW=1."""
    if os.getenv("CMA_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="slow training run; set CMA_RUN_SLOW=1 to enable")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# =============================================================================
# Configuration Fixtures
# =============================================================================

@pytest.fixture
def tiny_cfg() -> TrainConfig:
    """
    The smallest consistent configuration: 32×32 images, 16 patches, 2-layer encoder.
    """
    print("Building tiny configuration...")
    return build_config({"preset": "tiny"})


@pytest.fixture
def tiny_cfg_factory():
    """
    Factory for tiny configurations with overrides (dotted sections as nested dicts).
    """
    def _create(**overrides) -> TrainConfig:
        values = {"preset": "tiny"}
        values.update(overrides)
        return build_config(values)

    return _create


# =============================================================================
# Data Fixtures
# =============================================================================

@pytest.fixture
def tiny_dataset(tiny_cfg):
    """Synthetic dataset of the tiny configuration (32 samples, seed 17)."""
    return SynthDataset(tiny_cfg.synth, tiny_cfg.seed)


@pytest.fixture
def tiny_batch(tiny_cfg, tiny_dataset):
    """Batch of the first two samples with center masks."""
    samples = [tiny_dataset[i] for i in range(tiny_cfg.batch_size)]
    return make_batch(samples, tiny_cfg.synth.patch_size, "center", tiny_cfg.mask_area)


@pytest.fixture
def rng():
    """Seeded numpy generator."""
    return np.random.default_rng(1234)


# =============================================================================
# Isolation Fixtures
# =============================================================================

@pytest.fixture(autouse=True)
def isolated_debug_logger(tmp_path):
    """
    Turns debug capture off for every test and restores it afterwards.
    """
    previous_mode, previous_dir = debug_logger.mode, str(debug_logger.debug_dir)
    debug_logger.configure("off", str(tmp_path / "debug_logs"))
    yield debug_logger
    debug_logger.configure(previous_mode, previous_dir)
