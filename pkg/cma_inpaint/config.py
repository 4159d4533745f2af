# -*- coding: utf-8 -*-

"""
cma_inpaint configuration.

Centralized storage for process-level settings and constants.
Loads environment variables (optionally from a .env file) and provides
typed access to them. Run-level settings (model sizes, optimizer,
loss weights) live in the pydantic models of `cma_inpaint.models` and
are read from `key = value` config files by `cma_inpaint.settings`.
"""

import os
from typing import List

from dotenv import load_dotenv

# Load environment variables
load_dotenv()


def _env_flag(var_name: str, default: bool) -> bool:
    """
    Reads a boolean flag from the environment.

    Args:
        var_name: Environment variable name
        default: Value used when the variable is unset or empty

    Returns:
        False for "false", "0", "no", "off"; True for any other non-empty value
    """
    raw = os.getenv(var_name, "").strip().lower()
    if not raw:
        return default
    return raw not in ("false", "0", "no", "off")


# ==================================================================================================
# Logging Settings
# ==================================================================================================

# Log level for the application
# Available levels: TRACE, DEBUG, INFO, WARNING, ERROR, CRITICAL
# Default: INFO
LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO").upper()

# ==================================================================================================
# Debug Settings
# ==================================================================================================

# Debug capture mode for training steps:
# - off: disabled (default)
# - errors: buffer each step, write to DEBUG_DIR only when a numeric failure aborts training
# - all: write every step to DEBUG_DIR (overwritten on each step)
_DEBUG_MODE_RAW: str = os.getenv("DEBUG_MODE", "").lower()
if _DEBUG_MODE_RAW in ("off", "errors", "all"):
    DEBUG_MODE: str = _DEBUG_MODE_RAW
else:
    DEBUG_MODE: str = "off"

# Directory for debug capture files
DEBUG_DIR: str = os.getenv("DEBUG_DIR", "debug_logs")

# ==================================================================================================
# Numerics
# ==================================================================================================

# Check every forward op output for NaN/Inf and raise NumericError on the first offender.
# Turning this off speeds up long CPU runs slightly; the trainer still checks every loss.
CHECK_FINITE: bool = _env_flag("CHECK_FINITE", True)

# Epsilon used by clamp-min inside log/div so that values stay finite
NUMERIC_EPS: float = 1e-8

# Sentinel PSNR returned for identical images (MSE == 0)
PSNR_SENTINEL_DB: float = 99.0

# ==================================================================================================
# Data Pipeline
# ==================================================================================================

# Number of worker threads synthesizing samples ahead of the training loop.
# 0 means samples are synthesized inline on the training thread.
NUM_WORKERS: int = int(os.getenv("NUM_WORKERS", "0"))

# Maximum number of batches in flight in the prefetch queue
PREFETCH_DEPTH: int = int(os.getenv("PREFETCH_DEPTH", "4"))

# Fill value written into masked pixels of a corrupted image
MASK_FILL_VALUE: float = 0.5

# Reserved vocabulary tokens and their fixed ids
PAD_TOKEN: str = "[PAD]"
UNK_TOKEN: str = "[UNK]"
CLS_TOKEN: str = "[CLS]"
RESERVED_TOKENS: List[str] = [PAD_TOKEN, UNK_TOKEN, CLS_TOKEN]

# ==================================================================================================
# Checkpoint Format
# ==================================================================================================

CHECKPOINT_MAGIC: bytes = b"CMA1"
CHECKPOINT_VERSION: int = 1

# ==================================================================================================
# Output Schemas
# ==================================================================================================

LOSS_CSV_HEADER: List[str] = [
    "step", "cmad", "isd", "wpa", "l1",
    "g_adv_g", "l_adv_g", "g_adv_d", "l_adv_d", "total_g", "total_d",
]

DIAGNOSTICS_CSV_HEADER: List[str] = ["step", "lr", "grad_norm_g", "masked_l1"]

METRIC_CSV_HEADER: List[str] = ["method", "l1_pct", "fid", "kid", "tv_pct", "psnr", "ssim_pct"]

# ==================================================================================================
# Application Version
# ==================================================================================================

APP_VERSION: str = "0.3.0"
APP_TITLE: str = "cma-inpaint"
APP_DESCRIPTION: str = "Text-guided image inpainting with cross-modal alignment distillation"


def _warn_worker_configuration():
    """
    Print warning if the prefetch configuration cannot keep workers busy.
    Called at application startup.

    PREFETCH_DEPTH should be at least NUM_WORKERS, otherwise workers idle
    while the queue is full.
    """
    if NUM_WORKERS > 0 and PREFETCH_DEPTH < NUM_WORKERS:
        import sys
        YELLOW = "\033[93m"
        RESET = "\033[0m"

        warning_text = f"""
{YELLOW}⚠️  WARNING: Suboptimal data pipeline configuration detected.

    PREFETCH_DEPTH ({PREFETCH_DEPTH}) < NUM_WORKERS ({NUM_WORKERS})

    Only PREFETCH_DEPTH batches can be in flight, so some worker threads will idle.

    Example configuration:
      NUM_WORKERS=2
      PREFETCH_DEPTH=4{RESET}
"""
        print(warning_text, file=sys.stderr)


def _warn_unchecked_numerics():
    """
    Print warning when per-op finiteness checks are disabled.
    Called at application startup.
    """
    if not CHECK_FINITE:
        import sys
        YELLOW = "\033[93m"
        RESET = "\033[0m"
        print(
            f"{YELLOW}⚠️  CHECK_FINITE is off: NaN/Inf will only be reported at loss level.{RESET}",
            file=sys.stderr,
        )
