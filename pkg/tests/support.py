"""Helpers shared by unit and integration tests."""

from pathlib import Path
from typing import Dict, Optional

import numpy as np
import torch

from drct.core.image import ImageTensor, ValueRange
from drct.core.loader import write_image

# Micro network: every stage width (12, 18, 24, 30, 36) divides by 2 heads.
TINY_MODEL: Dict = {
    "scale": 2,
    "embed_dim": 12,
    "num_rdg": 2,
    "sdrcb_per_rdg": 1,
    "growth": 6,
    "num_heads": 2,
    "window_size": 4,
    "recon_features": 8,
}


def tiny_model(**overrides) -> Dict:
    return {**TINY_MODEL, **overrides}


def random_image(height: int, width: int, seed: int = 0,
                 batch: int = 1) -> ImageTensor:
    """Unit-range image already on 8-bit levels."""
    rng = np.random.default_rng(seed)
    levels = rng.integers(0, 256, size=(batch, 3, height, width))
    return ImageTensor(torch.from_numpy(levels / 255.0).float(),
                       ValueRange.UNIT)


def nearest_upscale(x: torch.Tensor, scale: int) -> torch.Tensor:
    """Pixel replication, an exactly dihedral-equivariant upscaler."""
    return x.repeat_interleave(scale, dim=-2).repeat_interleave(scale, dim=-1)


def write_benchmark(root: Path, count: int = 2, lr_size: int = 16,
                    scale: int = 2, seed: int = 0,
                    lr_shape: Optional[tuple] = None) -> Path:
    """
    Write ``count`` LR PNGs and HR PNGs that are their nearest-neighbour
    upscales, so pixel replication reproduces HR exactly.
    """
    root = Path(root)
    height, width = lr_shape or (lr_size, lr_size)
    for i in range(count):
        lr = random_image(height, width, seed=seed + i)
        hr = ImageTensor(nearest_upscale(lr.data, scale), ValueRange.UNIT)
        write_image(str(root / "LR_bicubic" / f"X{scale}" / f"img{i}.png"), lr)
        write_image(str(root / "HR" / f"img{i}.png"), hr)
    return root
