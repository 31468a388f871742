"""Rank-4 image container shared by the data, model and evaluation code."""

from dataclasses import dataclass
from enum import Enum

import torch

from .exceptions import ShapeError, ValidationError


class ValueRange(str, Enum):
    UNIT = "unit"            # 0..1
    EIGHT_BIT = "eight_bit"  # 0..255


@dataclass(frozen=True)
class ImageTensor:
    """A [batch, channel, height, width] real tensor with its value range."""

    data: torch.Tensor
    value_range: ValueRange = ValueRange.UNIT

    def __post_init__(self):
        if self.data.dim() != 4:
            raise ShapeError(
                f"ImageTensor must be rank 4 [B, C, H, W], "
                f"got shape {tuple(self.data.shape)}"
            )
        if self.data.shape[-2] < 1 or self.data.shape[-1] < 1:
            raise ShapeError(
                f"ImageTensor needs H, W >= 1, got {tuple(self.data.shape)}"
            )
        if not torch.isfinite(self.data).all():
            raise ValidationError("ImageTensor contains non-finite values")

    @property
    def shape(self):
        return self.data.shape

    @property
    def height(self) -> int:
        return self.data.shape[-2]

    @property
    def width(self) -> int:
        return self.data.shape[-1]

    def to_unit(self) -> "ImageTensor":
        if self.value_range is ValueRange.UNIT:
            return self
        return ImageTensor(self.data / 255.0, ValueRange.UNIT)

    def to_eight_bit(self) -> "ImageTensor":
        """Quantize to 8-bit levels: scale, round, clamp to 0..255."""
        if self.value_range is ValueRange.EIGHT_BIT:
            return self
        levels = (self.data.double() * 255.0).round().clamp(0, 255)
        return ImageTensor(levels, ValueRange.EIGHT_BIT)
