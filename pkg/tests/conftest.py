import numpy as np
import pytest
import torch

from scenetts.model import AcousticModel
from scenetts.model.config import ModelConfig
from scenetts.synthetic import make_toy_corpus, toy_vocabulary

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def toy_corpus():
    return make_toy_corpus()


@pytest.fixture(scope="session")
def toy_vocab(toy_corpus):
    return toy_vocabulary(toy_corpus)


@pytest.fixture(scope="session")
def tiny_config(toy_vocab):
    return ModelConfig.tiny(vocab_size=len(toy_vocab))


@pytest.fixture
def tiny_model(tiny_config):
    torch.manual_seed(123)
    return AcousticModel(tiny_config)


@pytest.fixture
def sine_waveform():
    def make(freq_hz: float, seconds: float = 1.0, rate: int = 16000, amp: float = 0.4):
        from scenetts.features import Waveform

        t = np.arange(int(seconds * rate)) / rate
        return Waveform((amp * np.sin(2 * np.pi * freq_hz * t)).astype(np.float64), rate)

    return make
