import numpy as np
import pytest

from semvid.config import ChannelConfig, ModelConfig
from semvid.frames import from_array


@pytest.fixture
def tiny_model_cfg():
    """Smallest geometry that still exercises routing: 16x16 frames,
    2x2 regions of 2x2 patches."""
    return ModelConfig(frame_size=16, patch=4, regions_per_side=2,
                       token_dim=16, routing_topk=2, num_heads=1,
                       lce_kernel=3, decoder_depth=1, decoder_mlp_ratio=2,
                       static_len=4, dynamic_len=16)


@pytest.fixture
def noiseless_channel():
    return ChannelConfig(snr_db=float("inf"), fading="awgn", seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def small_video(rng):
    stack = rng.uniform(0.0, 1.0, size=(5, 16, 16, 3)).astype(np.float32)
    return from_array(stack)
