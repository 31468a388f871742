"""Seeding helpers for reproducible runs."""

import random
import numpy as np
import torch


def seed_everything(seed: int, deterministic: bool = False) -> None:
    """Seed python, numpy and torch; optionally force deterministic kernels."""
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True)
        torch.backends.cudnn.benchmark = False


def derived_rng(*keys: int) -> np.random.Generator:
    """Generator whose stream depends only on the given integer keys."""
    return np.random.default_rng([int(k) for k in keys])
