"""
Shared test fixtures and configuration for drct tests.

Fixtures here build small networks, synthetic HR corpora and benchmark
folders in temporary directories so no test depends on external data.
"""

import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parents[1] / "src"))

from drct.core.config import ModelConfig  # noqa: E402
from drct.data.dataset import make_synthetic_corpus  # noqa: E402
from drct.model.network import build_model  # noqa: E402

from tests.support import TINY_MODEL, write_benchmark  # noqa: E402


@pytest.fixture
def tiny_config():
    """Micro model configuration (C=12, K=2, M=1, g=6, window 4)."""
    return ModelConfig(**TINY_MODEL)


@pytest.fixture
def tiny_net(tiny_config):
    """Freshly initialised micro network, seed 0."""
    return build_model(tiny_config, seed=0)


@pytest.fixture
def synthetic_root(tmp_path):
    """Folder with three 48x48 synthetic HR images under HR/."""
    return make_synthetic_corpus(str(tmp_path / "corpus"), count=3, size=48)


@pytest.fixture
def benchmark_root(tmp_path):
    """Benchmark folder whose HR images are 2x nearest copies of the LR files."""
    return write_benchmark(tmp_path / "bench", count=2, lr_size=16, scale=2)


@pytest.fixture
def lr_batch():
    generator = torch.Generator().manual_seed(0)
    return torch.rand(2, 3, 6, 5, generator=generator)
