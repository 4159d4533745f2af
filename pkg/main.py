# -*- coding: utf-8 -*-

"""
cma-inpaint - text-guided image inpainting with cross-modal alignment distillation.

Application entry point. Configures logging, prints configuration warnings
and dispatches to the command-line interface.

Usage:
    python main.py train --config run.cfg --out runs/desk
    or, once installed:
    cma train --config run.cfg --out runs/desk
"""

import sys

from cma_inpaint.cli import main, setup_logging
from cma_inpaint.config import LOG_LEVEL, _warn_unchecked_numerics, _warn_worker_configuration

# --- Loguru Configuration ---
setup_logging(LOG_LEVEL)

# --- Configuration Warnings ---
_warn_worker_configuration()
_warn_unchecked_numerics()


if __name__ == "__main__":
    sys.exit(main())
