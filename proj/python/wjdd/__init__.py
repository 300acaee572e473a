# Copyright (c) 2026 wjdd contributors
# SPDX-License-Identifier: Apache-2.0
"""Joint denoising and demosaicking of Bayer raws.

Images are numpy float64 arrays of shape (3, H, W) in [0, 1]; raw mosaics are
(H, W). All randomized operations take explicit seeds and are reproducible
bit-for-bit.
"""

from ._core import (
    Model,
    add_noise,
    bilinear_demosaic,
    cartoon,
    elbo,
    kl,
    make_prior,
    mosaic,
    procedural_dataset,
    psnr,
    ssim,
)

__all__ = [
    "Model",
    "add_noise",
    "bilinear_demosaic",
    "cartoon",
    "elbo",
    "kl",
    "make_prior",
    "mosaic",
    "procedural_dataset",
    "psnr",
    "ssim",
]
