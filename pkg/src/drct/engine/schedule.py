"""Multistep learning-rate schedule expressed in fractions of a stage."""

from typing import Sequence

from drct.core.config import DEFAULT_BASE_LR, DEFAULT_MILESTONES
from drct.core.exceptions import ArgumentError


def milestone_iterations(total: int,
                         fractions: Sequence[float] = DEFAULT_MILESTONES):
    """Iteration numbers at which the rate halves."""
    return [fraction * total for fraction in fractions]


def lr_at(iteration: int, base_lr: float = DEFAULT_BASE_LR,
          total: int = 800_000,
          fractions: Sequence[float] = DEFAULT_MILESTONES) -> float:
    """
    Learning rate at ``iteration`` of a ``total``-iteration stage.

    The rate starts at ``base_lr`` and halves at every milestone reached,
    where milestone ``f`` sits at iteration ``f * total``. Because milestones
    are fractions, rescaling ``total`` keeps the curve shape.
    """
    if total < 1:
        raise ArgumentError(f"total iterations must be >= 1, got {total}")
    passed = sum(1 for m in milestone_iterations(total, fractions)
                 if iteration >= m)
    return base_lr * 0.5 ** passed
