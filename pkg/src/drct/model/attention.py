"""
Swin Transformer Layer (STL) machinery.

Window partition/reverse, relative position bias, shifted-window masking,
windowed multi-head self-attention and the pre-norm STL block. Layers work
on channel-last tensors ``[B, H, W, C]`` whose spatial dims are multiples of
the window size; callers pad beforehand.
"""

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn
from torch import Tensor

from drct.core.exceptions import ConfigError, ShapeError

# Logit added to attention pairs that straddle a shift boundary.
MASK_FILL = -100.0


@dataclass
class WindowBatch:
    """Non-overlapping windows cut from a [B, Hp, Wp, C] tensor."""

    windows: Tensor  # [num_windows * B, window_size**2, C]
    batch: int
    height: int
    width: int
    window_size: int

    @property
    def num_windows(self) -> int:
        return (self.height // self.window_size) * (self.width // self.window_size)


def _check_window_multiple(height: int, width: int, window_size: int) -> None:
    if height % window_size or width % window_size:
        raise ShapeError(
            f"spatial size ({height}, {width}) is not a multiple of "
            f"window_size {window_size}"
        )


def window_partition(x: Tensor, window_size: int) -> WindowBatch:
    """Split ``x`` [B, Hp, Wp, C] into windows of window_size**2 tokens."""
    B, H, W, C = x.shape
    _check_window_multiple(H, W, window_size)
    w = window_size
    windows = x.view(B, H // w, w, W // w, w, C)
    windows = windows.permute(0, 1, 3, 2, 4, 5).contiguous().view(-1, w * w, C)
    return WindowBatch(windows, B, H, W, w)


def window_reverse(wb: WindowBatch) -> Tensor:
    """Inverse of window_partition, returns [B, Hp, Wp, C]."""
    w = wb.window_size
    x = wb.windows.view(
        wb.batch, wb.height // w, wb.width // w, w, w, -1
    )
    return x.permute(0, 1, 3, 2, 4, 5).contiguous().view(
        wb.batch, wb.height, wb.width, -1
    )


def relative_position_index(window_size: int) -> Tensor:
    """Index into a (2w-1)**2 bias table for every token pair of a window."""
    coords = torch.stack(torch.meshgrid(
        torch.arange(window_size), torch.arange(window_size), indexing='ij'
    ))
    coords = coords.flatten(1)  # 2, w*w
    relative = coords[:, :, None] - coords[:, None, :]
    relative = relative.permute(1, 2, 0).contiguous()
    relative[:, :, 0] += window_size - 1
    relative[:, :, 1] += window_size - 1
    relative[:, :, 0] *= 2 * window_size - 1
    return relative.sum(-1)


def build_shift_mask(height: int, width: int, window_size: int,
                     shift: int) -> Tensor:
    """
    Attention mask for cyclically shifted windows.

    Returns a [num_windows, w*w, w*w] tensor holding 0 for token pairs that
    came from the same pre-shift region and MASK_FILL otherwise. A zero
    shift gives an all-zero mask.
    """
    _check_window_multiple(height, width, window_size)
    num_windows = (height // window_size) * (width // window_size)
    n = window_size * window_size
    if shift == 0:
        return torch.zeros(num_windows, n, n)

    labels = torch.zeros(1, height, width, 1)
    slices = (
        slice(0, -window_size),
        slice(-window_size, -shift),
        slice(-shift, None),
    )
    region = 0
    for h in slices:
        for w in slices:
            labels[:, h, w, :] = region
            region += 1

    label_windows = window_partition(labels, window_size).windows.view(-1, n)
    mask = label_windows.unsqueeze(1) - label_windows.unsqueeze(2)
    return mask.masked_fill(mask != 0, MASK_FILL).masked_fill(mask == 0, 0.0)


class Mlp(nn.Module):
    def __init__(self, in_features: int, hidden_features: int):
        super().__init__()
        self.fc1 = nn.Linear(in_features, hidden_features)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden_features, in_features)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(self.act(self.fc1(x)))


class WindowAttention(nn.Module):
    """Window multi-head self-attention with a learned relative position bias."""

    def __init__(self, dim: int, window_size: int, num_heads: int,
                 qkv_bias: bool = True):
        super().__init__()
        if dim % num_heads != 0:
            raise ConfigError(
                f"attention width {dim} is not divisible by num_heads "
                f"{num_heads}"
            )
        self.dim = dim
        self.window_size = window_size
        self.num_heads = num_heads
        self.scale = (dim // num_heads) ** -0.5

        self.relative_position_bias_table = nn.Parameter(
            torch.zeros((2 * window_size - 1) ** 2, num_heads)
        )
        self.register_buffer(
            "relative_position_index",
            relative_position_index(window_size),
            persistent=False,
        )
        self.qkv = nn.Linear(dim, dim * 3, bias=qkv_bias)
        self.proj = nn.Linear(dim, dim)

    def relative_position_bias(self) -> Tensor:
        n = self.window_size * self.window_size
        bias = self.relative_position_bias_table[
            self.relative_position_index.view(-1)
        ].view(n, n, -1)
        return bias.permute(2, 0, 1).contiguous()  # heads, n, n

    def attention_probs(self, x: Tensor, mask: Optional[Tensor] = None):
        """Return (probabilities [B_, heads, n, n], values [B_, heads, n, d])."""
        B_, n, C = x.shape
        qkv = self.qkv(x).reshape(B_, n, 3, self.num_heads, C // self.num_heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4).unbind(0)

        attn = (q * self.scale) @ k.transpose(-2, -1)
        attn = attn + self.relative_position_bias().unsqueeze(0)
        if mask is not None:
            num_windows = mask.shape[0]
            attn = attn.view(B_ // num_windows, num_windows, self.num_heads,
                             n, n) + mask.unsqueeze(1).unsqueeze(0)
            attn = attn.view(-1, self.num_heads, n, n)
        return attn.softmax(dim=-1), v

    def forward(self, x: Tensor, mask: Optional[Tensor] = None) -> Tensor:
        """x: [num_windows * B, w*w, C]; mask: [num_windows, w*w, w*w]."""
        B_, n, C = x.shape
        probs, v = self.attention_probs(x, mask)
        out = (probs @ v).transpose(1, 2).reshape(B_, n, C)
        return self.proj(out)

    def extra_repr(self) -> str:
        return (f"dim={self.dim}, window_size={self.window_size}, "
                f"num_heads={self.num_heads}")


class SwinTransformerLayer(nn.Module):
    """
    Pre-norm STL: ``x + WMSA(LN(x))`` followed by ``+ MLP(LN(.))``.

    Args:
        dim: Channel width of the layer.
        num_heads: Attention heads; must divide ``dim``.
        window_size: Side of the square attention window.
        shift_size: Default cyclic shift, 0 or window_size // 2.
        mlp_ratio: Hidden width of the MLP relative to ``dim``.
        qkv_bias: Learn a bias for the q/k/v projection.
    """

    def __init__(self, dim: int, num_heads: int, window_size: int,
                 shift_size: int = 0, mlp_ratio: float = 2.0,
                 qkv_bias: bool = True):
        super().__init__()
        if shift_size not in (0, window_size // 2):
            raise ConfigError(
                f"shift_size must be 0 or window_size // 2, got {shift_size}"
            )
        self.dim = dim
        self.num_heads = num_heads
        self.window_size = window_size
        self.shift_size = shift_size

        self.norm1 = nn.LayerNorm(dim, eps=1e-5)
        self.attn = WindowAttention(dim, window_size, num_heads, qkv_bias)
        self.norm2 = nn.LayerNorm(dim, eps=1e-5)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x: Tensor, mask: Optional[Tensor] = None,
                shift: Optional[int] = None) -> Tensor:
        """
        Args:
            x: [B, Hp, Wp, C] with Hp, Wp multiples of window_size.
            mask: Shift mask from build_shift_mask for (Hp, Wp); ignored when
                the effective shift is 0.
            shift: Overrides the layer's configured shift for this call.
        """
        shift = self.shift_size if shift is None else shift
        B, H, W, C = x.shape
        if C != self.dim:
            raise ShapeError(f"STL expects {self.dim} channels, got {C}")

        shortcut = x
        x = self.norm1(x)
        if shift > 0:
            x = torch.roll(x, shifts=(-shift, -shift), dims=(1, 2))
            if mask is None:
                mask = build_shift_mask(H, W, self.window_size, shift)
            mask = mask.to(dtype=x.dtype, device=x.device)
        else:
            mask = None

        wb = window_partition(x, self.window_size)
        wb.windows = self.attn(wb.windows, mask=mask)
        x = window_reverse(wb)
        if shift > 0:
            x = torch.roll(x, shifts=(shift, shift), dims=(1, 2))

        x = shortcut + x
        return x + self.mlp(self.norm2(x))

    def extra_repr(self) -> str:
        return (f"dim={self.dim}, num_heads={self.num_heads}, "
                f"window_size={self.window_size}, shift_size={self.shift_size}")


def stl_forward(x: Tensor, layer: SwinTransformerLayer, shift: int,
                mask: Optional[Tensor] = None) -> Tensor:
    """Functional entry point: run ``layer`` on ``x`` with an explicit shift."""
    return layer(x, mask=mask, shift=shift)
