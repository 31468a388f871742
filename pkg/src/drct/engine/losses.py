"""Pixel losses with mean reduction over all elements."""

from typing import Callable, Dict

import torch
import torch.nn.functional as F

from drct.core.exceptions import ArgumentError, ShapeError

LossFn = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


def _check_shapes(sr: torch.Tensor, hr: torch.Tensor) -> None:
    if sr.shape != hr.shape:
        raise ShapeError(
            f"loss inputs differ in shape: {tuple(sr.shape)} vs "
            f"{tuple(hr.shape)}"
        )


def l1_loss(sr: torch.Tensor, hr: torch.Tensor) -> torch.Tensor:
    _check_shapes(sr, hr)
    return F.l1_loss(sr, hr, reduction='mean')


def l2_loss(sr: torch.Tensor, hr: torch.Tensor) -> torch.Tensor:
    _check_shapes(sr, hr)
    return F.mse_loss(sr, hr, reduction='mean')


LOSSES: Dict[str, LossFn] = {'l1': l1_loss, 'l2': l2_loss}


def get_loss(kind: str) -> LossFn:
    try:
        return LOSSES[kind.lower()]
    except KeyError:
        raise ArgumentError(
            f"Unknown loss '{kind}', expected one of {sorted(LOSSES)}"
        )
