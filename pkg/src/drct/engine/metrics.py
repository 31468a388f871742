"""
Benchmark fidelity metrics on full RGB: border crop, PSNR and SSIM.

Unit-range inputs are quantised to 8-bit levels (round, clamp 0..255) before
any metric is computed; all arithmetic is float64.
"""

from typing import Union

import cv2
import numpy as np
import torch
import torch.nn.functional as F

from drct.core.exceptions import ArgumentError, ShapeError
from drct.core.image import ImageTensor, ValueRange

PSNR_CAP = 100.0
DATA_RANGE = 255.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

ImageLike = Union[ImageTensor, torch.Tensor]


def _as_image(img: ImageLike) -> ImageTensor:
    if isinstance(img, ImageTensor):
        return img
    data = img.unsqueeze(0) if img.dim() == 3 else img
    return ImageTensor(data, ValueRange.UNIT)


def _levels(img: ImageLike) -> torch.Tensor:
    return _as_image(img).to_eight_bit().data.double()


def crop_border(img: ImageLike, pixels: int) -> ImageLike:
    """
    Central (H - 2p, W - 2p) region of an image.

    Raises:
        ArgumentError: If ``pixels`` is negative or the crop would leave
            nothing (2 * pixels >= min(H, W)).
    """
    data = img.data if isinstance(img, ImageTensor) else img
    h, w = data.shape[-2:]
    if pixels < 0:
        raise ArgumentError(f"crop pixels must be >= 0, got {pixels}")
    if 2 * pixels >= min(h, w):
        raise ArgumentError(
            f"cannot crop {pixels}px from each border of a {h}x{w} image"
        )
    if pixels == 0:
        return img
    cropped = data[..., pixels:h - pixels, pixels:w - pixels]
    if isinstance(img, ImageTensor):
        return ImageTensor(cropped, img.value_range)
    return cropped


def _prepare(sr: ImageLike, hr: ImageLike, crop: int):
    a, b = _levels(sr), _levels(hr)
    if a.shape != b.shape:
        raise ShapeError(
            f"metric inputs differ in shape: {tuple(a.shape)} vs "
            f"{tuple(b.shape)}"
        )
    return crop_border(a, crop), crop_border(b, crop)


def psnr(sr: ImageLike, hr: ImageLike, crop: int = 0) -> float:
    """PSNR in dB over the cropped full-RGB volume, capped at 100 dB."""
    a, b = _prepare(sr, hr, crop)
    mse = torch.mean((a - b) ** 2).item()
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(DATA_RANGE ** 2 / mse))


def gaussian_window(size: int = SSIM_WINDOW,
                    sigma: float = SSIM_SIGMA) -> torch.Tensor:
    kernel = cv2.getGaussianKernel(size, sigma)
    return torch.from_numpy(np.outer(kernel, kernel.transpose()))


def ssim(sr: ImageLike, hr: ImageLike, crop: int = 0) -> float:
    """
    Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5).

    Computed per channel with valid filtering, averaged over the SSIM map of
    each channel, then over channels and batch.

    Raises:
        ArgumentError: If the cropped image is smaller than the window.
    """
    a, b = _prepare(sr, hr, crop)
    if min(a.shape[-2:]) < SSIM_WINDOW:
        raise ArgumentError(
            f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels after "
            f"cropping, got {a.shape[-2]}x{a.shape[-1]}"
        )
    channels = a.shape[1]
    window = gaussian_window().to(a).expand(channels, 1, -1, -1)
    c1 = (SSIM_K1 * DATA_RANGE) ** 2
    c2 = (SSIM_K2 * DATA_RANGE) ** 2

    def filt(x):
        return F.conv2d(x, window, groups=channels)

    mu1, mu2 = filt(a), filt(b)
    sigma1_sq = filt(a * a) - mu1 ** 2
    sigma2_sq = filt(b * b) - mu2 ** 2
    sigma12 = filt(a * b) - mu1 * mu2
    ssim_map = ((2 * mu1 * mu2 + c1) * (2 * sigma12 + c2)) / (
        (mu1 ** 2 + mu2 ** 2 + c1) * (sigma1_sq + sigma2_sq + c2)
    )
    per_channel = ssim_map.mean(dim=(-2, -1))
    return float(per_channel.mean().item())
