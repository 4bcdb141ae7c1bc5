#!/usr/bin/env python3
"""
Inpainting networks and the two inference pipelines.

Both inpainters take a 2-channel input (masked signal, mask with 1 = masked)
and return a single channel of the same extent:

    waveform     (N, 2, L)    -> (N, L)     gated/dilated 1-D encoder-decoder, tanh output
    spectrogram  (N, 2, F, T) -> (N, F, T)  gated 2-D stack dilated along time, ReLU output

The same ConvNetwork class also runs the classifier backbones used by the
perceptual losses (conv stack -> global average pool -> dense head).
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from inpainting.checkpoint import load_weights, save_weights, weights_digest
from inpainting.diffcore import (
    LayerSpec,
    Tensor,
    activate,
    conv_forward,
    conv_output_length,
    gated_conv_forward,
    global_average_pool,
    linear,
    receptive_field,
    upsample_nearest,
)
from inpainting.dsp import (
    AudioClip,
    PhaseSeed,
    Spectrogram,
    StftParams,
    frame_mask,
    griffin_lim,
    log_compress,
    log_expand,
    magnitude,
    stft,
)
from inpainting.errors import (
    CheckpointError,
    ConfigurationError,
    DataError,
    ShapeMismatchError,
    SpectrogramKindError,
)
from inpainting.protocol import MaskSpec
from inpainting.seeding import derive_rng

logger = logging.getLogger(__name__)

Domain = Literal["waveform", "spectrogram"]
Pipeline = Literal["waveform", "spectrogram"]
PIPELINE_ALIASES: dict[str, Pipeline] = {
    "wave": "waveform",
    "waveform": "waveform",
    "spec": "spectrogram",
    "spectrogram": "spectrogram",
}


class ModelConfig(BaseModel):
    """Layer-by-layer architecture; serialised as the JSON sidecar of a checkpoint."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "model"
    domain: Domain
    role: Literal["inpainter", "classifier"] = "inpainter"
    layers: tuple[LayerSpec, ...]
    input_channels: int = Field(2, ge=1)
    output_channels: int = Field(1, ge=1)
    output_activation: Literal["tanh", "relu", "identity"] = "identity"
    class_count: int = 0
    stft: StftParams | None = None

    @property
    def spatial_dims(self) -> int:
        return 1 if self.domain == "waveform" else 2

    @property
    def conv_layers(self) -> list[tuple[int, LayerSpec]]:
        return [(i, layer) for i, layer in enumerate(self.layers) if layer.is_conv]

    @model_validator(mode="before")
    @classmethod
    def _default_stft(cls, data: object) -> object:
        if isinstance(data, dict) and data.get("domain") == "spectrogram" and data.get("stft") is None:
            data = {**data, "stft": StftParams()}
        return data

    @model_validator(mode="after")
    def _check_architecture(self) -> "ModelConfig":
        if not self.conv_layers:
            raise ValueError("model needs at least one convolution layer")

        channels = self.input_channels
        for index, layer in enumerate(self.layers):
            if layer.kind == "activation":
                continue
            if layer.spatial_dims != self.spatial_dims:
                raise ValueError(
                    f"layer {index} ({layer.kind}) is {layer.spatial_dims}-D in a {self.domain} model"
                )
            if layer.is_conv:
                if layer.in_channels != channels:
                    raise ValueError(
                        f"layer {index} expects {layer.in_channels} input channels, gets {channels}"
                    )
                channels = layer.out_channels

        if self.role == "inpainter":
            if channels != self.output_channels:
                raise ValueError(f"last layer emits {channels} channels, need {self.output_channels}")
            strides = np.ones(self.spatial_dims, dtype=np.int64)
            factors = np.ones(self.spatial_dims, dtype=np.int64)
            for layer in self.layers:
                if layer.is_conv:
                    strides *= np.asarray(layer.stride)
                elif layer.kind == "upsample_nearest":
                    factors *= np.asarray(layer.factor)
            if not np.array_equal(strides, factors):
                raise ValueError(
                    f"downsampling {tuple(strides)} is not undone by upsampling {tuple(factors)}"
                )
        elif self.class_count < 2:
            raise ValueError("classifier needs class_count >= 2")

        return self

    def alignment(self) -> tuple[int, ...]:
        """Spatial length multiple that makes every strided layer divide exactly."""
        total = np.ones(self.spatial_dims, dtype=np.int64)
        for layer in self.layers:
            if layer.is_conv:
                total *= np.asarray(layer.stride)
        return tuple(int(t) for t in total)

    def receptive_field(self) -> tuple[int, ...]:
        return receptive_field(self.layers)

    def _accepts(self, axis: int, size: int) -> bool:
        for layer in self.layers:
            if layer.is_conv:
                k, s, d = layer.kernel[axis], layer.stride[axis], layer.dilation[axis]
                if size < (k - 1) * d + 1:
                    return False
                size = conv_output_length(size, k, s, d, layer.padding)
            elif layer.kind == "upsample_nearest":
                size *= layer.factor[axis]
        return True

    def minimum_extent(self) -> tuple[int, ...]:
        """Shortest input extent per spatial axis that every convolution accepts after alignment padding."""
        extents = []
        for axis, step in enumerate(self.alignment()):
            padded = step
            while not self._accepts(axis, padded):
                padded += step
            extents.append(padded - step + 1)
        return tuple(extents)

    def minimum_clip_length(self) -> int:
        """Shortest clip, in samples, an inpainter of this architecture can process."""
        extent = self.minimum_extent()
        if self.domain == "waveform":
            return extent[0]
        assert self.stft is not None
        if self.stft.frequency_bins < extent[0]:
            raise ConfigurationError(
                f"{self.name}: {self.stft.frequency_bins} frequency bins, "
                f"the layers need at least {extent[0]}"
            )
        length = 1
        while self.stft.frame_count(length) < extent[1]:
            length += 1
        return length

    def config_hash(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()


def check_receptive_field(config: ModelConfig, mask_extent: int, axis: int = -1) -> None:
    """Raise unless the receptive field along ``axis`` spans ``mask_extent``."""
    rf = config.receptive_field()[axis]
    if rf < mask_extent:
        raise ConfigurationError(
            f"{config.name}: receptive field {rf} is shorter than the mask extent {mask_extent}",
            suggestion="Add dilation or strided layers, or shorten the evaluation mask",
            context={"receptive_field": rf, "mask_extent": mask_extent},
        )


def _gated(cin: int, cout: int, dims: int, **kwargs: object) -> LayerSpec:
    kind = "gated_conv1d" if dims == 1 else "gated_conv2d"
    return LayerSpec(kind=kind, in_channels=cin, out_channels=cout, **kwargs)


def default_waveform_config(mask_seconds: float = 0.2, sample_rate: int = 16000) -> ModelConfig:
    """
    8 gated layers, channels [32,64,64,64,64,64,32,1], kernel 9, dilations
    [1,2,4,8,16,8,4,2]; the first two layers stride by 4 and two x4 upsamplings
    sit before the last two, giving a 4825-sample receptive field.
    """
    dilations = [1, 2, 4, 8, 16, 8, 4, 2]
    channels = [32, 64, 64, 64, 64, 64, 32, 1]
    layers: list[LayerSpec] = []
    cin = 2
    for index, (d, cout) in enumerate(zip(dilations, channels)):
        if index in (6, 7):
            layers.append(LayerSpec(kind="upsample_nearest", factor=4))
        last = index == len(channels) - 1
        layers.append(
            _gated(
                cin,
                cout,
                1,
                kernel=9,
                stride=4 if index < 2 else 1,
                dilation=d,
                activation="identity" if last else "leaky_relu",
            )
        )
        cin = cout
    config = ModelConfig(
        name="waveform-default",
        domain="waveform",
        layers=tuple(layers),
        output_activation="tanh",
    )
    check_receptive_field(config, int(round(mask_seconds * sample_rate)))
    return config


def _spectrogram_stack(
    name: str,
    time_dilations: Sequence[int],
    channels: Sequence[int],
    stft_params: StftParams | None,
) -> ModelConfig:
    layers = []
    cin = 2
    for index, (d, cout) in enumerate(zip(time_dilations, channels)):
        last = index == len(channels) - 1
        layers.append(
            _gated(
                cin,
                cout,
                2,
                kernel=(3, 3),
                dilation=(1, int(d)),
                activation="identity" if last else "leaky_relu",
            )
        )
        cin = cout
    return ModelConfig(
        name=name,
        domain="spectrogram",
        layers=tuple(layers),
        output_activation="relu",
        stft=stft_params or StftParams(),
    )


def default_spectrogram_config(stft_params: StftParams | None = None) -> ModelConfig:
    """6 gated 3x3 layers, time dilations [1,2,4,4,2,1], channels [32,64,64,64,32,1]."""
    return _spectrogram_stack(
        "spectrogram-default", [1, 2, 4, 4, 2, 1], [32, 64, 64, 64, 32, 1], stft_params
    )


def ablation_spectrogram_config(
    time_dilations: Sequence[int], width: int = 16, stft_params: StftParams | None = None
) -> ModelConfig:
    """Fixed-width gated stack; only the time dilations (hence the receptive field) vary."""
    channels = [width] * (len(time_dilations) - 1) + [1]
    name = "spectrogram-d" + "-".join(str(d) for d in time_dilations)
    return _spectrogram_stack(name, time_dilations, channels, stft_params)


def load_model_config(path: str | Path) -> ModelConfig:
    path = Path(path)
    try:
        return ModelConfig.model_validate_json(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigurationError(f"architecture file not found: {path}") from e
    except ValidationError as e:
        raise ConfigurationError(f"invalid architecture file {path}: {e}") from e


class ConvNetwork:
    """Parameters plus forward pass for a ModelConfig."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor]) -> None:
        expected = self.parameter_shapes(config)
        if set(params) != set(expected):
            missing = sorted(set(expected) - set(params))
            extra = sorted(set(params) - set(expected))
            raise CheckpointError(
                f"parameter names do not match {config.name}",
                context={"missing": missing, "unexpected": extra},
            )
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ShapeMismatchError(f"{name}: shape {params[name].shape} != {shape}")
        self.config = config
        self.params = {name: params[name] for name in expected}

    @staticmethod
    def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        for index, layer in config.conv_layers:
            key = f"layer{index:02d}"
            banks = ("gate", "feature") if layer.is_gated else ("",)
            for bank in banks:
                prefix = f"{key}.{bank}_" if bank else f"{key}."
                shapes[prefix + "weight"] = layer.weight_shape()
                shapes[prefix + "bias"] = (layer.out_channels,)
        if config.role == "classifier":
            width = config.conv_layers[-1][1].out_channels
            shapes["head.weight"] = (config.class_count, width)
            shapes["head.bias"] = (config.class_count,)
        return shapes

    @classmethod
    def initialize(
        cls, config: ModelConfig, seed: int, dtype: type | np.dtype = np.float64
    ) -> "ConvNetwork":
        """Weights uniform in +-sqrt(1/fan_in), biases zero."""
        params: dict[str, Tensor] = {}
        for name, shape in cls.parameter_shapes(config).items():
            if name.endswith("bias"):
                values = np.zeros(shape)
            else:
                fan_in = int(np.prod(shape[1:]))
                bound = np.sqrt(1.0 / fan_in)
                values = derive_rng(seed, "init", config.name, name).uniform(-bound, bound, shape)
            params[name] = Tensor(values.astype(dtype), requires_grad=True)
        return cls(config, params)

    @classmethod
    def from_weights(cls, config: ModelConfig, weights: dict[str, NDArray]) -> "ConvNetwork":
        return cls(config, {k: Tensor(v.copy(), requires_grad=True) for k, v in weights.items()})

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.params.values())).dtype

    @property
    def feature_tap(self) -> int:
        """Index of the last convolution layer; its activation is the perceptual feature map."""
        return self.config.conv_layers[-1][0]

    def inference_copy(self) -> "ConvNetwork":
        """Same weight arrays, no gradient tracking; safe to share across threads."""
        return ConvNetwork(self.config, {k: Tensor(p.values) for k, p in self.params.items()})

    def weights(self) -> dict[str, NDArray]:
        return {name: p.values.astype(np.float64) for name, p in self.params.items()}

    def zero_final_layer(self) -> None:
        index = self.config.conv_layers[-1][0]
        for name, param in self.params.items():
            if name.startswith(f"layer{index:02d}."):
                param.values = np.zeros_like(param.values)

    def _apply(self, index: int, layer: LayerSpec, x: Tensor) -> Tensor:
        if layer.kind == "upsample_nearest":
            return upsample_nearest(x, layer.factor)
        if layer.kind == "activation":
            return activate(x, layer.activation, layer.slope)
        key = f"layer{index:02d}"
        p = self.params
        if layer.is_gated:
            return gated_conv_forward(
                x,
                layer,
                p[f"{key}.gate_weight"],
                p[f"{key}.gate_bias"],
                p[f"{key}.feature_weight"],
                p[f"{key}.feature_bias"],
            )
        return conv_forward(x, layer, p[f"{key}.weight"], p[f"{key}.bias"])

    def trunk(self, x: Tensor) -> Tensor:
        """Run the layer stack up to and including the feature tap."""
        if x.ndim != self.config.spatial_dims + 2 or x.shape[1] != self.config.input_channels:
            raise ShapeMismatchError(
                f"{self.config.name}: input {x.shape} does not match "
                f"(N, {self.config.input_channels}, {'L' if self.config.spatial_dims == 1 else 'F, T'})"
            )
        if x.dtype != self.dtype and not x.requires_grad:
            x = Tensor(x.values.astype(self.dtype), x.requires_grad)
        for index, layer in enumerate(self.config.layers[: self.feature_tap + 1]):
            x = self._apply(index, layer, x)
        return x

    def forward(self, x: Tensor) -> Tensor:
        """Inpainter output (N, C_out, *spatial) or classifier logits (N, K)."""
        h = self.trunk(x)
        start = self.feature_tap + 1
        for index, layer in enumerate(self.config.layers[start:], start=start):
            h = self._apply(index, layer, h)
        if self.config.role == "classifier":
            return linear(global_average_pool(h), self.params["head.weight"], self.params["head.bias"])
        return activate(h, self.config.output_activation)


def inpainter_forward(model: ConvNetwork, inputs: NDArray | Tensor) -> Tensor:
    """
    (N, 2, *spatial) -> (N, *spatial).

    Spatial axes are zero-padded at the end to the model's stride alignment and
    the output is cropped back, so output extent always equals input extent.
    """
    if model.config.role != "inpainter":
        raise ConfigurationError(f"{model.config.name} is not an inpainter")
    x = inputs if isinstance(inputs, Tensor) else Tensor(inputs)
    spatial = x.shape[2:]
    extra = [(-size) % a for size, a in zip(spatial, model.config.alignment())]
    if any(extra):
        x = Tensor(np.pad(x.values, [(0, 0), (0, 0)] + [(0, e) for e in extra]))
    y = model.forward(x)
    crop = (slice(None), 0) + tuple(slice(0, size) for size in spatial)
    return y[crop]


def _require_domain(model: ConvNetwork, domain: Domain) -> None:
    if model.config.domain != domain:
        raise ConfigurationError(
            f"{model.config.name} is a {model.config.domain} model, {domain} expected"
        )


def forward_waveform(model: ConvNetwork, masked_clip: AudioClip, mask: NDArray) -> AudioClip:
    """Masked samples must already be zero; mask is per-sample with 1 = masked."""
    _require_domain(model, "waveform")
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (len(masked_clip),):
        raise ShapeMismatchError(f"mask length {mask.shape} != clip length {len(masked_clip)}")
    inputs = np.stack([masked_clip.samples, mask])[None]
    output = inpainter_forward(model, inputs)
    return masked_clip.with_samples(output.values[0].astype(np.float64))


def spectrogram_inputs(masked: NDArray, frames: NDArray) -> NDArray:
    """Stack (F, T) log magnitudes with the frame mask broadcast over frequency."""
    frames = np.asarray(frames, dtype=np.float64)
    return np.stack([masked, np.broadcast_to(frames[None, :], masked.shape)])


def forward_spectrogram(
    model: ConvNetwork, masked_spec: Spectrogram, frame_mask: NDArray
) -> Spectrogram:
    _require_domain(model, "spectrogram")
    if masked_spec.kind != "log_magnitude":
        raise SpectrogramKindError(f"expected log_magnitude spectrogram, got {masked_spec.kind}")
    frames = np.asarray(frame_mask)
    if frames.shape != (masked_spec.time_frames,):
        raise ShapeMismatchError(
            f"frame mask length {frames.shape} != {masked_spec.time_frames} frames"
        )
    output = inpainter_forward(model, spectrogram_inputs(masked_spec.bins, frames)[None])
    return masked_spec.with_bins(output.values[0].astype(np.float64))


def _selector(mask: NDArray | MaskSpec, shape: tuple[int, ...]) -> NDArray[np.bool_]:
    if isinstance(mask, MaskSpec):
        mask = mask.sample_mask()
    mask = np.asarray(mask) > 0
    if len(shape) == 2 and mask.shape == (shape[1],):
        # frame mask over a (F, T) spectrogram
        mask = np.broadcast_to(mask[None, :], shape)
    if mask.shape != shape:
        raise ShapeMismatchError(f"mask shape {mask.shape} does not align with {shape}")
    return mask


def paste_back(output, original, mask):  # type: ignore[no-untyped-def]
    """Original outside the mask, model output inside it."""
    if isinstance(output, AudioClip):
        if not isinstance(original, AudioClip) or len(original) != len(output):
            raise ShapeMismatchError("paste_back needs two clips of equal length")
        selector = _selector(mask, (len(output),))
        return original.with_samples(np.where(selector, output.samples, original.samples))
    if isinstance(output, Spectrogram):
        if not isinstance(original, Spectrogram) or original.shape != output.shape:
            raise ShapeMismatchError("paste_back needs two spectrograms of equal shape")
        if original.kind != output.kind:
            raise SpectrogramKindError(f"cannot paste {output.kind} into {original.kind}")
        selector = _selector(mask, output.shape)
        return original.with_bins(np.where(selector, output.bins, original.bins))
    output = np.asarray(output)
    original = np.asarray(original)
    if output.shape != original.shape:
        raise ShapeMismatchError(f"paste_back shapes differ: {output.shape} vs {original.shape}")
    return np.where(_selector(mask, output.shape), output, original)


@dataclass(frozen=True)
class InpaintRequest:
    clip: AudioClip
    mask: MaskSpec

    def __post_init__(self) -> None:
        if self.mask.length != len(self.clip):
            raise ShapeMismatchError(
                f"mask is for {self.mask.length} samples, clip has {len(self.clip)}"
            )


def resolve_pipeline(pipeline: str) -> Pipeline:
    try:
        return PIPELINE_ALIASES[pipeline]
    except KeyError:
        raise ConfigurationError(
            f"unknown pipeline {pipeline!r}", suggestion="Use wave or spec"
        ) from None


def require_clip_length(config: ModelConfig, clip: AudioClip) -> None:
    minimum = config.minimum_clip_length()
    if len(clip) < minimum:
        raise DataError(
            f"clip has {len(clip)} samples, {config.name} needs at least {minimum}",
            suggestion=f"Use a clip of at least {minimum / clip.sample_rate:.3f} s or a smaller architecture",
            context={"clip_samples": len(clip), "minimum_samples": minimum},
        )


def inpaint_clip(
    pipeline: str,
    clip: AudioClip,
    sample_mask: NDArray,
    model: ConvNetwork,
    gl_iterations: int = 60,
    gl_phase: Literal["zero", "keep_known"] = "zero",
) -> AudioClip:
    """
    Fill the masked samples of ``clip``; any binary mask, including an empty one.

    The result equals ``clip`` bit-for-bit outside the mask.
    """
    domain = resolve_pipeline(pipeline)
    _require_domain(model, domain)
    model = model.inference_copy()
    sample_mask = np.asarray(sample_mask, dtype=np.float64)
    if sample_mask.shape != (len(clip),):
        raise ShapeMismatchError(f"mask length {sample_mask.shape} != clip length {len(clip)}")
    require_clip_length(model.config, clip)
    masked = clip.with_samples(np.where(sample_mask > 0, 0.0, clip.samples))

    if domain == "waveform":
        output = forward_waveform(model, masked, sample_mask)
        return paste_back(output, masked, sample_mask)

    params = model.config.stft
    assert params is not None
    complex_spec = stft(masked, params)
    log_spec = log_compress(magnitude(complex_spec))
    frames = frame_mask(sample_mask, params)
    model_input = log_spec.with_bins(np.where(frames[None, :], 0.0, log_spec.bins))
    predicted = paste_back(forward_spectrogram(model, model_input, frames), log_spec, frames)
    target = log_expand(predicted)
    seed = PhaseSeed.keep_known(complex_spec, frames) if gl_phase == "keep_known" else PhaseSeed.zero()
    reconstruction = griffin_lim(target, gl_iterations, seed).clip
    return paste_back(reconstruction, masked, sample_mask)


def inpaint(
    pipeline: str,
    request: InpaintRequest,
    model: ConvNetwork,
    gl_iterations: int = 60,
    gl_phase: Literal["zero", "keep_known"] = "zero",
) -> AudioClip:
    return inpaint_clip(
        pipeline, request.clip, request.mask.sample_mask(), model, gl_iterations, gl_phase
    )


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_model(path: str | Path, model: ConvNetwork, extra: dict | None = None) -> Path:
    """Checkpoint plus ``<path>.json`` holding the architecture and the weight digest."""
    weights = model.weights()
    path = save_weights(path, weights)
    sidecar = {
        "config": model.config.model_dump(mode="json"),
        "weights_sha256": weights_digest(weights),
        **(extra or {}),
    }
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.debug(f"Saved {model.config.name} to {path}")
    return path


def read_sidecar(path: str | Path) -> dict:
    sidecar = sidecar_path(path)
    if not sidecar.is_file():
        raise CheckpointError(
            f"architecture sidecar not found: {sidecar}",
            suggestion="Checkpoints are written as <name> plus <name>.json; keep both together",
        )
    try:
        return json.loads(sidecar.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt sidecar {sidecar}: {e}") from e


def load_model(path: str | Path) -> ConvNetwork:
    sidecar = read_sidecar(path)
    try:
        config = ModelConfig.model_validate(sidecar["config"])
    except (KeyError, ValidationError) as e:
        raise CheckpointError(f"invalid architecture in {sidecar_path(path)}: {e}") from e
    weights = load_weights(path)
    expected = sidecar.get("weights_sha256")
    if expected is not None and weights_digest(weights) != expected:
        raise CheckpointError(f"weights in {path} do not match the digest in their sidecar")
    return ConvNetwork.from_weights(config, weights)
