"""
Dense-residual blocks: SDRCB (five dense STL stages) and RDG (chain of SDRCBs).

Blocks take channel-first features [B, C, H, W] whose spatial dims are
already padded to a window multiple.
"""

from typing import List, Optional, Tuple

import torch
import torch.nn as nn
from torch import Tensor

from drct.core.config import DENSE_STAGES, LEAKY_SLOPE, ModelConfig
from drct.core.exceptions import ShapeError

from .attention import SwinTransformerLayer


def stage_shift(stage_index: int, window_size: int) -> int:
    """Shift for 1-based dense stage j: 0 when j is odd, window_size // 2 when even."""
    return 0 if stage_index % 2 == 1 else window_size // 2


class DenseStage(nn.Module):
    """STL at the concatenated width followed by the transition conv."""

    def __init__(self, in_width: int, out_width: int, stage_index: int,
                 config: ModelConfig, final: bool):
        super().__init__()
        self.in_width = in_width
        self.out_width = out_width
        self.stage_index = stage_index
        self.stl = SwinTransformerLayer(
            dim=in_width,
            num_heads=config.num_heads,
            window_size=config.window_size,
            shift_size=stage_shift(stage_index, config.window_size),
            mlp_ratio=config.mlp_ratio,
            qkv_bias=config.qkv_bias,
        )
        kernel = config.transition_kernel
        self.transition = nn.Conv2d(in_width, out_width, kernel, 1, kernel // 2)
        # Final stage stays linear so a zeroed transition is an exact zero.
        self.act = nn.Identity() if final else nn.LeakyReLU(
            negative_slope=LEAKY_SLOPE, inplace=False
        )

    def forward(self, x: Tensor, mask: Optional[Tensor] = None) -> Tensor:
        if x.shape[1] != self.in_width:
            raise ShapeError(
                f"dense stage {self.stage_index} expects {self.in_width} "
                f"channels, got {x.shape[1]}"
            )
        x = x.permute(0, 2, 3, 1)
        x = self.stl(x, mask=mask)
        x = x.permute(0, 3, 1, 2).contiguous()
        return self.act(self.transition(x))


class SDRCB(nn.Module):
    """
    Swin-Dense-Residual-Connected Block.

    Stage j sees the channel concatenation ``[Z, Z_1, ..., Z_{j-1}]`` of
    width ``C + (j-1)*g``; stages 1-4 emit ``g`` channels and stage 5 emits
    ``C``. The block returns ``alpha * Z_5 + Z``.

    Setting ``record_widths`` stores the (input, output) width of every stage
    of the last forward in ``last_widths``.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.embed_dim = config.embed_dim
        self.growth = config.growth_channels
        self.alpha = config.alpha
        self.record_widths = False
        self.last_widths: List[Tuple[int, int]] = []

        widths = config.stage_widths()
        stages = []
        for j, width in enumerate(widths, start=1):
            final = j == DENSE_STAGES
            out_width = self.embed_dim if final else self.growth
            stages.append(DenseStage(width, out_width, j, config, final))
        self.stage = nn.ModuleList(stages)

    def forward(self, z: Tensor, mask: Optional[Tensor] = None) -> Tensor:
        if z.shape[1] != self.embed_dim:
            raise ShapeError(
                f"SDRCB expects {self.embed_dim} channels, got {z.shape[1]}"
            )
        features = [z]
        widths = []
        out = z
        for j, stage in enumerate(self.stage, start=1):
            dense = torch.cat(features, dim=1)
            expected = self.embed_dim + (j - 1) * self.growth
            if dense.shape[1] != expected:
                raise ShapeError(
                    f"stage {j} concatenated width {dense.shape[1]} != {expected}"
                )
            out = stage(dense, mask)
            widths.append((dense.shape[1], out.shape[1]))
            features.append(out)
        if self.record_widths:
            self.last_widths = widths
        return self.alpha * out + z

    def zero_final_transition(self) -> None:
        final = self.stage[-1].transition
        nn.init.zeros_(final.weight)
        if final.bias is not None:
            nn.init.zeros_(final.bias)


class RDG(nn.Module):
    """Residual Dense Group: M SDRCBs applied in sequence."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.sdrcb = nn.ModuleList(
            SDRCB(config) for _ in range(config.sdrcb_per_rdg)
        )

    def forward(self, x: Tensor, mask: Optional[Tensor] = None) -> Tensor:
        for block in self.sdrcb:
            x = block(x, mask)
        return x


def sdrcb_forward(z: Tensor, block: SDRCB,
                  mask: Optional[Tensor] = None) -> Tensor:
    return block(z, mask)


def rdg_forward(f: Tensor, group: RDG, mask: Optional[Tensor] = None) -> Tensor:
    return group(f, mask)
