"""Tests for the inpainting networks, paste-back and the two pipelines."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from inpainting.diffcore import LayerSpec
from inpainting.dsp import AudioClip, StftParams, log_magnitude
from inpainting.errors import (
    CheckpointError,
    ConfigurationError,
    DataError,
    ShapeMismatchError,
    SpectrogramKindError,
)
from inpainting.models import (
    ConvNetwork,
    InpaintRequest,
    ModelConfig,
    default_spectrogram_config,
    default_waveform_config,
    forward_spectrogram,
    forward_waveform,
    inpaint,
    inpaint_clip,
    inpainter_forward,
    load_model,
    load_model_config,
    paste_back,
    resolve_pipeline,
    save_model,
    sidecar_path,
)
from inpainting.protocol import MaskSpec, zero_masked

SR = 16000


def masked_input(clip: AudioClip, start: int, end: int) -> tuple[AudioClip, np.ndarray]:
    mask = MaskSpec(start, end, len(clip))
    return zero_masked(clip, mask), mask.sample_mask()


class TestModelConfig:
    def test_default_waveform_layout(self):
        config = default_waveform_config()
        gated = [layer for _, layer in config.conv_layers]
        assert [layer.out_channels for layer in gated] == [32, 64, 64, 64, 64, 64, 32, 1]
        assert [layer.dilation[0] for layer in gated] == [1, 2, 4, 8, 16, 8, 4, 2]
        assert all(layer.kernel == (9,) for layer in gated)
        assert config.alignment() == (16,)
        assert config.output_activation == "tanh"

    def test_default_spectrogram_layout(self):
        config = default_spectrogram_config()
        gated = [layer for _, layer in config.conv_layers]
        assert [layer.dilation for layer in gated] == [(1, d) for d in (1, 2, 4, 4, 2, 1)]
        assert [layer.out_channels for layer in gated] == [32, 64, 64, 64, 32, 1]
        assert config.stft == StftParams()
        assert config.output_activation == "relu"

    def test_spectrogram_config_defaults_stft(self, tiny_spectrogram_config):
        data = tiny_spectrogram_config.model_dump(mode="json")
        data["stft"] = None
        assert ModelConfig.model_validate(data).stft == StftParams()

    def test_minimum_extent(self, tiny_waveform_config, tiny_spectrogram_config):
        wave = default_waveform_config()
        assert wave.minimum_extent() == (2049,)
        assert wave.minimum_clip_length() == 2049
        spec = default_spectrogram_config()
        assert spec.minimum_extent() == (3, 9)
        assert spec.minimum_clip_length() == 1024
        assert tiny_waveform_config.minimum_extent() == (5,)
        assert tiny_spectrogram_config.minimum_extent() == (3, 5)

    def test_channel_chain_checked(self):
        with pytest.raises(ValueError, match="input channels"):
            ModelConfig(
                domain="waveform",
                layers=(
                    LayerSpec(kind="conv1d", in_channels=2, out_channels=4, kernel=3),
                    LayerSpec(kind="conv1d", in_channels=3, out_channels=1, kernel=3),
                ),
            )

    def test_stride_must_be_undone(self):
        with pytest.raises(ValueError, match="downsampling"):
            ModelConfig(
                domain="waveform",
                layers=(LayerSpec(kind="conv1d", in_channels=2, out_channels=1, kernel=3, stride=2),),
            )

    def test_layer_dimension_must_match_domain(self):
        with pytest.raises(ValueError):
            ModelConfig(
                domain="spectrogram",
                layers=(LayerSpec(kind="conv1d", in_channels=2, out_channels=1, kernel=3),),
            )

    def test_classifier_needs_classes(self):
        with pytest.raises(ValueError, match="class_count"):
            ModelConfig(
                domain="waveform",
                role="classifier",
                layers=(LayerSpec(kind="conv1d", in_channels=1, out_channels=4, kernel=3),),
                input_channels=1,
            )

    def test_config_hash_is_stable(self):
        assert default_waveform_config().config_hash() == default_waveform_config().config_hash()
        assert default_waveform_config().config_hash() != default_spectrogram_config().config_hash()

    def test_json_file_round_trip(self, tmp_path, tiny_spectrogram_config):
        path = tmp_path / "arch.json"
        path.write_text(tiny_spectrogram_config.model_dump_json())
        assert load_model_config(path) == tiny_spectrogram_config

    def test_bad_architecture_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_model_config(tmp_path / "missing.json")
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"domain": "waveform", "layers": []}))
        with pytest.raises(ConfigurationError):
            load_model_config(path)


class TestConvNetwork:
    def test_parameter_names(self, tiny_waveform_config):
        shapes = ConvNetwork.parameter_shapes(tiny_waveform_config)
        assert shapes == {
            "layer00.gate_weight": (4, 2, 5),
            "layer00.gate_bias": (4,),
            "layer00.feature_weight": (4, 2, 5),
            "layer00.feature_bias": (4,),
            "layer02.gate_weight": (1, 4, 5),
            "layer02.gate_bias": (1,),
            "layer02.feature_weight": (1, 4, 5),
            "layer02.feature_bias": (1,),
        }

    def test_initialization_is_seeded_and_bounded(self, tiny_waveform_config):
        a = ConvNetwork.initialize(tiny_waveform_config, seed=3).weights()
        b = ConvNetwork.initialize(tiny_waveform_config, seed=3).weights()
        c = ConvNetwork.initialize(tiny_waveform_config, seed=4).weights()
        assert all(np.array_equal(a[k], b[k]) for k in a)
        assert not np.array_equal(a["layer00.gate_weight"], c["layer00.gate_weight"])
        assert np.max(np.abs(a["layer00.gate_weight"])) <= np.sqrt(1 / 10)
        assert not np.any(a["layer00.gate_bias"])

    def test_float32_initialization(self, tiny_waveform_config):
        network = ConvNetwork.initialize(tiny_waveform_config, seed=0, dtype=np.float32)
        assert network.dtype == np.float32

    def test_wrong_parameter_set_rejected(self, tiny_waveform_config):
        weights = ConvNetwork.initialize(tiny_waveform_config, 0).weights()
        weights.pop("layer02.gate_bias")
        with pytest.raises(CheckpointError):
            ConvNetwork.from_weights(tiny_waveform_config, weights)

    def test_wrong_parameter_shape_rejected(self, tiny_waveform_config):
        weights = ConvNetwork.initialize(tiny_waveform_config, 0).weights()
        weights["layer02.gate_bias"] = np.zeros(2)
        with pytest.raises(ShapeMismatchError):
            ConvNetwork.from_weights(tiny_waveform_config, weights)

    def test_inference_copy_is_untracked(self, tiny_waveform_config):
        network = ConvNetwork.initialize(tiny_waveform_config, 0)
        copy = network.inference_copy()
        assert all(p.requires_grad for p in network.params.values())
        assert not any(p.requires_grad for p in copy.params.values())

    def test_input_shape_checked(self, tiny_waveform_config):
        network = ConvNetwork.initialize(tiny_waveform_config, 0)
        with pytest.raises(ShapeMismatchError):
            inpainter_forward(network, np.zeros((1, 3, 64)))


class TestForward:
    def test_zero_final_layer_gives_silence(self, tiny_waveform_config, noise_clip):
        network = ConvNetwork.initialize(tiny_waveform_config, 0)
        network.zero_final_layer()
        masked, mask = masked_input(noise_clip, 1000, 2000)
        assert not np.any(forward_waveform(network, masked, mask).samples)

    def test_zero_final_layer_gives_zero_spectrogram(self, tiny_spectrogram_config, noise_clip):
        network = ConvNetwork.initialize(tiny_spectrogram_config, 0)
        network.zero_final_layer()
        spec = log_magnitude(noise_clip, tiny_spectrogram_config.stft)
        frames = np.zeros(spec.time_frames)
        frames[40:60] = 1
        out = forward_spectrogram(network, spec, frames)
        assert out.kind == "log_magnitude"
        assert not np.any(out.bins)

    @pytest.mark.parametrize("length", [301, 1000, 1023])
    def test_output_length_equals_input(self, tiny_waveform_config, rng, length):
        network = ConvNetwork.initialize(tiny_waveform_config, 0)
        clip = AudioClip(rng.uniform(-1, 1, length), SR)
        masked, mask = masked_input(clip, 100, 200)
        out = forward_waveform(network, masked, mask)
        assert len(out) == length
        assert np.all(np.abs(out.samples) <= 1.0)

    def test_default_waveform_model_runs(self, noise_clip):
        network = ConvNetwork.initialize(default_waveform_config(), 0)
        masked, mask = masked_input(noise_clip, 1500, 2500)
        out = forward_waveform(network, masked, mask)
        assert len(out) == len(noise_clip)
        assert np.all(np.abs(out.samples) <= 1.0)

    def test_spectrogram_output_nonnegative(self, tiny_spectrogram_config, noise_clip):
        network = ConvNetwork.initialize(tiny_spectrogram_config, 1)
        spec = log_magnitude(noise_clip, tiny_spectrogram_config.stft)
        out = forward_spectrogram(network, spec, np.zeros(spec.time_frames))
        assert out.shape == spec.shape
        assert np.all(out.bins >= 0)

    def test_translation_covariance(self, rng):
        config = ModelConfig(
            domain="waveform",
            layers=(
                LayerSpec(kind="gated_conv1d", in_channels=2, out_channels=3, kernel=3, dilation=2),
                LayerSpec(kind="gated_conv1d", in_channels=3, out_channels=1, kernel=3, activation="identity"),
            ),
        )
        network = ConvNetwork.initialize(config, 5)
        rf = config.receptive_field()[0]
        length, shift = 256, 16
        inputs = np.stack([rng.uniform(-1, 1, length), (rng.uniform(size=length) > 0.5) * 1.0])
        shifted = np.zeros_like(inputs)
        shifted[:, shift:] = inputs[:, :-shift]
        a = inpainter_forward(network, inputs[None]).values[0]
        b = inpainter_forward(network, shifted[None]).values[0]
        interior = np.arange(rf, length - shift - rf)
        np.testing.assert_allclose(b[interior + shift], a[interior], rtol=0, atol=1e-13)

    def test_domain_mismatch(self, tiny_spectrogram_config, noise_clip):
        network = ConvNetwork.initialize(tiny_spectrogram_config, 0)
        with pytest.raises(ConfigurationError):
            forward_waveform(network, noise_clip, np.zeros(len(noise_clip)))

    def test_mask_length_mismatch(self, tiny_waveform_config, noise_clip):
        network = ConvNetwork.initialize(tiny_waveform_config, 0)
        with pytest.raises(ShapeMismatchError):
            forward_waveform(network, noise_clip, np.zeros(10))

    def test_spectrogram_kind_checked(self, tiny_spectrogram_config, noise_clip):
        from inpainting.dsp import magnitude, stft

        network = ConvNetwork.initialize(tiny_spectrogram_config, 0)
        spec = magnitude(stft(noise_clip, tiny_spectrogram_config.stft))
        with pytest.raises(SpectrogramKindError):
            forward_spectrogram(network, spec, np.zeros(spec.time_frames))


class TestPasteBack:
    def test_empty_and_full_masks(self, rng):
        output, original = rng.standard_normal(50), rng.standard_normal(50)
        assert np.array_equal(paste_back(output, original, np.zeros(50)), original)
        assert np.array_equal(paste_back(output, original, np.ones(50)), output)

    def test_matches_loop(self, rng):
        output, original = rng.standard_normal(40), rng.standard_normal(40)
        mask = np.r_[np.zeros(20), np.ones(20)]
        result = paste_back(output, original, mask)
        for i in range(40):
            assert result[i] == (output[i] if mask[i] else original[i])

    @settings(max_examples=50, deadline=None)
    @given(
        arrays(np.float64, 32, elements=st.floats(-1, 1)),
        arrays(np.float64, 32, elements=st.floats(-1, 1)),
        arrays(np.int8, 32, elements=st.integers(0, 1)),
    )
    def test_idempotent(self, output, original, mask):
        once = paste_back(output, original, mask)
        assert np.array_equal(paste_back(once, original, mask), once)

    def test_clips(self, noise_clip):
        silence = noise_clip.with_samples(np.zeros(len(noise_clip)))
        mask = MaskSpec(100, 200, len(noise_clip))
        result = paste_back(silence, noise_clip, mask)
        assert not np.any(result.samples[100:200])
        assert np.array_equal(result.samples[:100], noise_clip.samples[:100])
        assert np.array_equal(result.samples[200:], noise_clip.samples[200:])

    def test_spectrogram_frame_mask(self, noise_clip, small_params):
        spec = log_magnitude(noise_clip, small_params)
        zero = spec.with_bins(np.zeros(spec.shape))
        frames = np.zeros(spec.time_frames, dtype=bool)
        assert np.array_equal(paste_back(zero, spec, frames).bins, spec.bins)
        frames[10:20] = True
        pasted = paste_back(zero, spec, frames).bins
        assert not np.any(pasted[:, 10:20])
        assert np.array_equal(pasted[:, 20:], spec.bins[:, 20:])

    def test_shape_mismatch(self, noise_clip):
        with pytest.raises(ShapeMismatchError):
            paste_back(np.zeros(5), np.zeros(6), np.zeros(5))
        with pytest.raises(ShapeMismatchError):
            paste_back(noise_clip, noise_clip.with_samples(np.zeros(10)), np.zeros(10))


class TestPipelines:
    def test_aliases(self):
        assert resolve_pipeline("wave") == "waveform"
        assert resolve_pipeline("spec") == "spectrogram"
        with pytest.raises(ConfigurationError):
            resolve_pipeline("mel")

    def test_request_checks_mask_length(self, noise_clip):
        with pytest.raises(ShapeMismatchError):
            InpaintRequest(noise_clip, MaskSpec(10, 20, 100))

    def test_waveform_keeps_unmasked_samples(self, tiny_waveform_config, noise_clip):
        network = ConvNetwork.initialize(tiny_waveform_config, 2)
        request = InpaintRequest(noise_clip, MaskSpec(1000, 1800, len(noise_clip)))
        out = inpaint("wave", request, network)
        assert len(out) == len(noise_clip)
        assert np.array_equal(out.samples[:1000], noise_clip.samples[:1000])
        assert np.array_equal(out.samples[1800:], noise_clip.samples[1800:])
        assert np.array_equal(out.samples, inpaint("wave", request, network).samples)

    @pytest.mark.parametrize("gl_phase", ["zero", "keep_known"])
    def test_spectrogram_keeps_unmasked_samples(self, tiny_spectrogram_config, noise_clip, gl_phase):
        network = ConvNetwork.initialize(tiny_spectrogram_config, 2)
        request = InpaintRequest(noise_clip, MaskSpec(1000, 1800, len(noise_clip)))
        first = inpaint("spec", request, network, gl_iterations=4, gl_phase=gl_phase)
        second = inpaint("spec", request, network, gl_iterations=4, gl_phase=gl_phase)
        assert len(first) == len(noise_clip)
        assert np.array_equal(first.samples[:1000], noise_clip.samples[:1000])
        assert np.array_equal(first.samples[1800:], noise_clip.samples[1800:])
        assert np.array_equal(first.samples, second.samples)

    def test_spectrogram_pipeline_with_empty_mask_is_identity(self, tiny_spectrogram_config, noise_clip):
        network = ConvNetwork.initialize(tiny_spectrogram_config, 2)
        out = inpaint_clip("spectrogram", noise_clip, np.zeros(len(noise_clip)), network, 2)
        assert np.array_equal(out.samples, noise_clip.samples)

    def test_clip_shorter_than_architecture(self, rng):
        network = ConvNetwork.initialize(default_waveform_config(), 0)
        short = AudioClip(rng.uniform(-0.5, 0.5, 1600), SR)
        with pytest.raises(DataError, match="at least 2049"):
            inpaint_clip("wave", short, MaskSpec(600, 900, 1600).sample_mask(), network)

        shortest = AudioClip(rng.uniform(-0.5, 0.5, 2049), SR)
        out = inpaint_clip("wave", shortest, MaskSpec(600, 900, 2049).sample_mask(), network)
        assert len(out) == 2049

    def test_clip_shorter_than_spectrogram_architecture(self, rng):
        network = ConvNetwork.initialize(default_spectrogram_config(), 0)
        short = AudioClip(rng.uniform(-0.5, 0.5, 1023), SR)
        with pytest.raises(DataError, match="at least 1024"):
            inpaint_clip("spec", short, MaskSpec(300, 500, 1023).sample_mask(), network, 1)

    def test_training_weights_untouched_by_inference(self, tiny_waveform_config, noise_clip):
        network = ConvNetwork.initialize(tiny_waveform_config, 2)
        before = network.weights()
        inpaint_clip("waveform", noise_clip, MaskSpec(10, 500, len(noise_clip)).sample_mask(), network)
        after = network.weights()
        assert all(np.array_equal(before[k], after[k]) for k in before)


class TestPersistence:
    def test_save_and_load(self, tmp_path, tiny_spectrogram_config):
        network = ConvNetwork.initialize(tiny_spectrogram_config, 9)
        path = save_model(tmp_path / "model.ckpt", network)
        assert sidecar_path(path).name == "model.ckpt.json"
        loaded = load_model(path)
        assert loaded.config == network.config
        assert all(np.array_equal(loaded.weights()[k], v) for k, v in network.weights().items())

    def test_missing_sidecar(self, tmp_path, tiny_waveform_config):
        path = save_model(tmp_path / "model.ckpt", ConvNetwork.initialize(tiny_waveform_config, 0))
        sidecar_path(path).unlink()
        with pytest.raises(CheckpointError):
            load_model(path)

    def test_digest_mismatch(self, tmp_path, tiny_waveform_config):
        path = save_model(tmp_path / "model.ckpt", ConvNetwork.initialize(tiny_waveform_config, 0))
        sidecar = json.loads(sidecar_path(path).read_text())
        sidecar["weights_sha256"] = "0" * 64
        sidecar_path(path).write_text(json.dumps(sidecar))
        with pytest.raises(CheckpointError, match="digest"):
            load_model(path)
