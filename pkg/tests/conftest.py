import numpy as np
import pytest
import torch

from tse.auxnet import AuxConfig
from tse.codec import EncoderConfig
from tse.extractor import ExtractorConfig
from tse.model import ModelConfig, TargetExtractor


def tiny_model_config(refine_iters=0, num_speakers=4, embedding_dim=8, channels=12,
                      filter_length=8):
    return ModelConfig(
        encoder=EncoderConfig(filter_length=filter_length, channels=channels),
        aux=AuxConfig(resnet_blocks=1, block_channels=12, embedding_dim=embedding_dim,
                      num_speakers=num_speakers),
        extractor=ExtractorConfig(dprnn_blocks=1, rnn_hidden=8, feature_dim=8),
        refine_iters=refine_iters,
    )


@pytest.fixture
def tiny_model():
    torch.manual_seed(0)
    return TargetExtractor(tiny_model_config())


@pytest.fixture
def tiny_refine_model():
    torch.manual_seed(0)
    return TargetExtractor(tiny_model_config(refine_iters=2))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
