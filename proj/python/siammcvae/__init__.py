"""Siamese masked conditional VAE for video frame restoration."""

from ._core import (
    CoreError,
    MaskSet,
    Model,
    PatchGrid,
    __version__,
    fsim,
    generate_scene,
    mae,
    mse,
    patchify,
    psnr,
    read_ppm,
    sample_mask,
    ssim,
    unpatchify,
    write_ppm,
)

__all__ = [
    "CoreError",
    "MaskSet",
    "Model",
    "PatchGrid",
    "__version__",
    "fsim",
    "generate_scene",
    "mae",
    "mse",
    "patchify",
    "psnr",
    "read_ppm",
    "sample_mask",
    "ssim",
    "unpatchify",
    "write_ppm",
]
