import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(1234)


def tiny_run_config(**overrides):
    """Desk-scale config matching the synthetic training setup."""
    from prsanet.config import RunConfig

    base = dict(
        mode="windowed",
        snippet_interval=1,
        sequence_length=64,
        window_stride=64,
        max_duration=16,
        c_input=32,
        c_embed=32,
        c_out=32,
        scales=(2, 4),
        t_iter=2,
        k_bins=8,
        head_hidden=64,
        lr_schedule=((5, 2e-4),),
        batch_size=8,
        seed=3,
    )
    base.update(overrides)
    return RunConfig(**base)


def micro_model_config(**overrides):
    """Smallest useful architecture, for gradient checks."""
    from prsanet.network import ModelConfig

    base = dict(
        in_channels=6,
        c_input=4,
        c_embed=4,
        c_out=4,
        scales=(2,),
        t_iter=1,
        max_duration=4,
        k_bins=4,
        head_hidden=8,
    )
    base.update(overrides)
    return ModelConfig(**base)
