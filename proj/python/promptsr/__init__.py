"""Anchor-prompted lightweight super-resolution."""

from ._promptsr import (
    Upscaler,
    __version__,
    bicubic_resize,
    count_multi_adds,
    count_params,
    psnr_y,
    ssim_y,
)

__all__ = [
    "Upscaler",
    "__version__",
    "bicubic_resize",
    "count_multi_adds",
    "count_params",
    "psnr_y",
    "ssim_y",
]
