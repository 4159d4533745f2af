# -*- coding: utf-8 -*-

"""
cma_inpaint - text-guided image inpainting with cross-modal alignment distillation.

A numpy reverse-mode tensor library, a vision-language encoder, a
convolutional generator, global/local spectral-norm discriminators, the
distillation objectives, image-quality metrics and the training driver.
"""

from cma_inpaint.config import APP_VERSION

__version__ = APP_VERSION

__all__ = ["__version__"]
