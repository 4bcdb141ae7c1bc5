"""Shared fixtures for the inpainting test suite."""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from inpainting.diffcore import LayerSpec  # noqa: E402
from inpainting.dsp import AudioClip, StftParams  # noqa: E402
from inpainting.models import ModelConfig  # noqa: E402
from inpainting.protocol import CorpusSpec, preset  # noqa: E402

SAMPLE_RATE = 16000


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def small_params() -> StftParams:
    """64-sample Hann window, hop 16: COLA and cheap."""
    return StftParams(window_width=64, hop=16)


@pytest.fixture
def sine_clip() -> AudioClip:
    t = np.arange(4000) / SAMPLE_RATE
    return AudioClip(0.6 * np.sin(2 * np.pi * 440.0 * t), SAMPLE_RATE)


@pytest.fixture
def noise_clip(rng: np.random.Generator) -> AudioClip:
    return AudioClip(rng.uniform(-0.5, 0.5, 4096), SAMPLE_RATE)


@pytest.fixture
def tiny_corpus_spec() -> CorpusSpec:
    """toy-sc classes, 3 short clips each (2 train, 1 test)."""
    return preset("toy-sc", examples_per_class=3, clip_seconds=0.25)


@pytest.fixture
def tiny_waveform_config() -> ModelConfig:
    """Two gated layers with one stride-2 / upsample pair."""
    return ModelConfig(
        name="tiny-wave",
        domain="waveform",
        layers=(
            LayerSpec(kind="gated_conv1d", in_channels=2, out_channels=4, kernel=5, stride=2),
            LayerSpec(kind="upsample_nearest", factor=2),
            LayerSpec(
                kind="gated_conv1d", in_channels=4, out_channels=1, kernel=5, activation="identity"
            ),
        ),
        output_activation="tanh",
    )


@pytest.fixture
def tiny_spectrogram_config(small_params: StftParams) -> ModelConfig:
    return ModelConfig(
        name="tiny-spec",
        domain="spectrogram",
        layers=(
            LayerSpec(kind="gated_conv2d", in_channels=2, out_channels=4, kernel=3, dilation=(1, 2)),
            LayerSpec(
                kind="gated_conv2d", in_channels=4, out_channels=1, kernel=3, activation="identity"
            ),
        ),
        output_activation="relu",
        stft=small_params,
    )
