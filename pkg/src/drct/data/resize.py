"""
MATLAB-convention bicubic resampling.

Resizing is separable: each axis gets an [out, in] weight matrix and the
image is resampled as ``W_h @ img @ W_w^T``. On downscaling with antialias the
kernel is stretched by the inverse ratio, rows are renormalised to sum to one
and out-of-range taps are clamped to the edge pixel (``imresize`` behaviour).
"""

from typing import Union

import numpy as np
import torch

from drct.core.exceptions import ArgumentError
from drct.core.image import ImageTensor

BICUBIC_A = -0.5
KERNEL_WIDTH = 4.0


def bicubic_weight(x: Union[float, np.ndarray],
                   a: float = BICUBIC_A) -> Union[float, np.ndarray]:
    """Keys cubic convolution kernel."""
    absx = np.abs(np.asarray(x, dtype=np.float64))
    absx2 = absx * absx
    absx3 = absx2 * absx
    inner = ((a + 2) * absx3 - (a + 3) * absx2 + 1) * (absx <= 1)
    outer = (a * absx3 - 5 * a * absx2 + 8 * a * absx - 4 * a) * (
        (absx > 1) & (absx < 2)
    )
    weight = inner + outer
    if np.ndim(weight) == 0:
        return float(weight)
    return weight


def bicubic_weight_matrix(in_size: int, out_size: int,
                          antialias: bool = True,
                          a: float = BICUBIC_A) -> np.ndarray:
    """
    Resampling matrix of shape [out_size, in_size] for one axis.

    Rows sum to one. Output pixel ``i`` (1-based) maps to input coordinate
    ``u = i / scale + 0.5 * (1 - 1 / scale)``.
    """
    if in_size < 1 or out_size < 1:
        raise ArgumentError(
            f"resize sizes must be >= 1, got in={in_size}, out={out_size}"
        )
    scale = out_size / in_size
    kernel_width = KERNEL_WIDTH
    stretch = antialias and scale < 1
    if stretch:
        kernel_width /= scale

    x = np.arange(1, out_size + 1, dtype=np.float64)
    u = x / scale + 0.5 * (1 - 1 / scale)
    left = np.floor(u - kernel_width / 2)
    taps = int(np.ceil(kernel_width)) + 2
    indices = left[:, None] + np.arange(taps)[None, :]
    distance = u[:, None] - indices
    if stretch:
        weights = scale * bicubic_weight(scale * distance, a)
    else:
        weights = bicubic_weight(distance, a)
    weights = weights / weights.sum(axis=1, keepdims=True)

    columns = np.clip(indices, 1, in_size).astype(np.int64) - 1
    matrix = np.zeros((out_size, in_size), dtype=np.float64)
    rows = np.repeat(np.arange(out_size), taps)
    np.add.at(matrix, (rows, columns.ravel()), weights.ravel())
    return matrix


def resize_bicubic(img: ImageTensor, out_h: int, out_w: int,
                   antialias: bool = True) -> ImageTensor:
    """
    Resize a [B, C, H, W] ImageTensor to [B, C, out_h, out_w].

    Raises:
        ArgumentError: If out_h or out_w is below 1.
    """
    if out_h < 1 or out_w < 1:
        raise ArgumentError(
            f"output size must be at least 1x1, got {out_h}x{out_w}"
        )
    data = img.data
    w_h = torch.from_numpy(
        bicubic_weight_matrix(img.height, out_h, antialias)
    ).to(dtype=torch.float64, device=data.device)
    w_w = torch.from_numpy(
        bicubic_weight_matrix(img.width, out_w, antialias)
    ).to(dtype=torch.float64, device=data.device)
    out = torch.einsum('oh,bchw,pw->bcop', w_h, data.double(), w_w)
    return ImageTensor(out.to(data.dtype), img.value_range)


def bicubic_downscale(img: ImageTensor, scale: int) -> ImageTensor:
    """LR counterpart of an HR image: floor(H / s) x floor(W / s)."""
    out_h, out_w = img.height // scale, img.width // scale
    return resize_bicubic(img, out_h, out_w, antialias=True)
