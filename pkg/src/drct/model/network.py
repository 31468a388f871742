"""
The DRCT network: shallow extraction, the RDG deep-feature chain and the
pixel-shuffle reconstruction head.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple, Union

import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import ValidationError as PydanticValidationError
from torch import Tensor

from drct.core.checkpoint import Checkpoint, load_checkpoint, restore_parameters
from drct.core.config import ModelConfig, check_model_config
from drct.core.exceptions import ConfigError, ShapeError, ValidationError
from drct.core.image import ImageTensor, ValueRange

from .attention import build_shift_mask
from .blocks import RDG, SDRCB

logger = logging.getLogger(__name__)

# Published parameter count of the x4 model, used as a comparison target.
REFERENCE_PARAMETER_COUNT = 14_130_000


@dataclass
class ParameterRecord:
    name: str
    shape: Tuple[int, ...]
    values: Tensor

    @property
    def count(self) -> int:
        return math.prod(self.shape)


class Upsample(nn.Sequential):
    """Sub-pixel upsampler: repeated x2 stages for 2 and 4, a single x3 stage."""

    def __init__(self, scale: int, num_feat: int):
        layers: List[nn.Module] = []
        if scale in (2, 4):
            for _ in range(int(math.log2(scale))):
                layers.append(nn.Conv2d(num_feat, 4 * num_feat, 3, 1, 1))
                layers.append(nn.PixelShuffle(2))
        elif scale == 3:
            layers.append(nn.Conv2d(num_feat, 9 * num_feat, 3, 1, 1))
            layers.append(nn.PixelShuffle(3))
        else:
            raise ConfigError(
                f"scale {scale} is not supported, use one of 2, 3, 4"
            )
        super().__init__(*layers)


def _init_weights(module: nn.Module) -> None:
    if isinstance(module, nn.Linear):
        nn.init.trunc_normal_(module.weight, std=0.02)
        if module.bias is not None:
            nn.init.constant_(module.bias, 0)
    elif isinstance(module, nn.LayerNorm):
        nn.init.constant_(module.bias, 0)
        nn.init.constant_(module.weight, 1.0)


class DRCT(nn.Module):
    """
    Dense-residual-connected Swin transformer for single-image SR.

    ``forward`` maps a unit-range batch [B, in_channels, H, W] to
    [B, in_channels, s*H, s*W] for any H, W >= 1. Features are padded to a
    window multiple before the RDG chain and cropped back afterwards.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        check_model_config(config)
        self.config = config
        self.scale = config.scale
        self.window_size = config.window_size
        self.img_range = config.img_range
        embed_dim = config.embed_dim

        if config.subtract_mean and config.in_channels == 3:
            mean = torch.tensor(config.rgb_mean).view(1, 3, 1, 1)
        else:
            mean = torch.zeros(1, 1, 1, 1)
        self.register_buffer("mean", mean, persistent=False)

        self.conv_first = nn.Conv2d(config.in_channels, embed_dim, 3, 1, 1)
        self.rdg = nn.ModuleList(RDG(config) for _ in range(config.num_rdg))
        self.conv_after_body = nn.Conv2d(embed_dim, embed_dim, 3, 1, 1)

        self.conv_before_upsample = nn.Sequential(
            nn.Conv2d(embed_dim, config.recon_features, 3, 1, 1),
            nn.LeakyReLU(inplace=True),
        )
        self.upsample = Upsample(config.scale, config.recon_features)
        self.conv_last = nn.Conv2d(
            config.recon_features, config.in_channels, 3, 1, 1
        )

        self.apply(_init_weights)
        for name, param in self.named_parameters():
            if name.endswith("relative_position_bias_table"):
                nn.init.trunc_normal_(param, std=0.02)
        if config.identity_init:
            self.zero_final_transitions()

    def sdrcbs(self) -> List[SDRCB]:
        return [block for group in self.rdg for block in group.sdrcb]

    def zero_final_transitions(self) -> None:
        """Zero every SDRCB's stage-5 transition, making each RDG the identity."""
        for block in self.sdrcbs():
            block.zero_final_transition()

    def _pad_to_window(self, x: Tensor) -> Tensor:
        h, w = x.shape[-2:]
        pad_h = (self.window_size - h % self.window_size) % self.window_size
        pad_w = (self.window_size - w % self.window_size) % self.window_size
        if not pad_h and not pad_w:
            return x
        # Reflection needs the pad to be smaller than the padded dimension.
        mode = 'reflect' if pad_h < h and pad_w < w else 'replicate'
        return F.pad(x, (0, pad_w, 0, pad_h), mode=mode)

    def _check_input(self, x: Tensor) -> None:
        if x.dim() != 4 or x.shape[1] != self.config.in_channels:
            raise ShapeError(
                f"expected input [B, {self.config.in_channels}, H, W], "
                f"got {tuple(x.shape)}"
            )

    def shallow_extract(self, lr: Tensor) -> Tensor:
        """F_0: normalise and apply the 3x3 shallow conv (C_in -> C)."""
        self._check_input(lr)
        x = (lr - self.mean.type_as(lr)) * self.img_range
        return self.conv_first(x)

    def deep_features(self, f0: Tensor) -> Tensor:
        """F_K: run the RDG chain on window-padded F_0, cropped back to size."""
        h, w = f0.shape[-2:]
        x = self._pad_to_window(f0)
        mask = build_shift_mask(
            x.shape[-2], x.shape[-1], self.window_size, self.window_size // 2
        ).to(dtype=x.dtype, device=x.device)
        for group in self.rdg:
            x = group(x, mask)
        return x[..., :h, :w]

    def reconstruct(self, features: Tensor) -> Tensor:
        """H_rec: C channels at H x W -> C_in channels at sH x sW."""
        if features.dim() != 4 or features.shape[1] != self.config.embed_dim:
            raise ShapeError(
                f"reconstruct expects [B, {self.config.embed_dim}, H, W], "
                f"got {tuple(features.shape)}"
            )
        x = self.conv_before_upsample(features)
        x = self.conv_last(self.upsample(x))
        return x / self.img_range + self.mean.type_as(x)

    def forward(self, lr: Tensor) -> Tensor:
        self._check_input(lr)
        if not torch.isfinite(lr).all():
            raise ValidationError("input contains non-finite values")
        f0 = self.shallow_extract(lr)
        fk = self.deep_features(f0)
        return self.reconstruct(f0 + self.conv_after_body(fk))


def build_model(config: Union[ModelConfig, Dict[str, Any]],
                seed: int = 0) -> DRCT:
    """
    Build a DRCT network with deterministic initialisation.

    Args:
        config: Model configuration or a raw dict of ModelConfig fields.
        seed: Seed for parameter initialisation. The global torch RNG state
            is left untouched.

    Raises:
        ConfigError: If the configuration violates an architectural
            constraint; the message names the constraint.
    """
    if isinstance(config, dict):
        try:
            config = ModelConfig(**config)
        except PydanticValidationError as e:
            problems = '; '.join(err['msg'] for err in e.errors())
            raise ConfigError(f"Invalid model configuration: {problems}")
    check_model_config(config)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        net = DRCT(config)
    logger.debug(f"Built DRCT x{config.scale}: {count_parameters(net)} params")
    return net


def super_resolve(net: DRCT, lr: ImageTensor) -> ImageTensor:
    """Inference on an ImageTensor; returns a unit-range ImageTensor."""
    lr = lr.to_unit()
    param = next(net.parameters())
    with torch.no_grad():
        sr = net(lr.data.to(dtype=param.dtype, device=param.device))
    return ImageTensor(sr.cpu(), ValueRange.UNIT)


def count_parameters(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters())


def parameter_records(net: nn.Module) -> List[ParameterRecord]:
    """One record per trainable tensor, in module registration order."""
    return [
        ParameterRecord(name, tuple(p.shape), p.detach())
        for name, p in net.named_parameters()
    ]


def parameter_breakdown(net: DRCT) -> Dict[str, int]:
    """Parameter counts grouped by network component."""
    breakdown = {"shallow": count_parameters(net.conv_first)}
    for i, group in enumerate(net.rdg):
        breakdown[f"rdg.{i}"] = count_parameters(group)
    breakdown["transition"] = count_parameters(net.conv_after_body)
    breakdown["reconstruction"] = sum(
        count_parameters(m)
        for m in (net.conv_before_upsample, net.upsample, net.conv_last)
    )
    breakdown["total"] = count_parameters(net)
    return breakdown


def load_model(path: str) -> Tuple[DRCT, Checkpoint]:
    """Rebuild the network stored in a checkpoint envelope."""
    checkpoint = load_checkpoint(path)
    net = build_model(checkpoint.config, seed=int(checkpoint.metadata.get('seed', 0)))
    restore_parameters(net, checkpoint)
    return net, checkpoint
