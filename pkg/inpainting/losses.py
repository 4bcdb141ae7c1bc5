#!/usr/bin/env python3
"""
Training losses, evaluation metrics and the classifier backbones behind the
perceptual terms.

Losses work on Tensors (differentiable); metrics return floats.
"""

import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Sequence

import numpy as np
import psutil
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field
from scipy.signal import correlate2d
from scipy.signal.windows import gaussian

from inpainting.diffcore import Adam, LayerSpec, Tensor, cross_entropy
from inpainting.dsp import AudioClip, Spectrogram, StftParams, log_compress, log_magnitude, magnitude
from inpainting.errors import (
    BackboneTrainingError,
    ConfigurationError,
    DataError,
    ShapeMismatchError,
    warn_empty_mask,
)
from inpainting.logging_config import log_stage
from inpainting.models import ConvNetwork, Domain, ModelConfig, load_model, read_sidecar, save_model
from inpainting.protocol import LabeledClip
from inpainting.seeding import derive_rng

logger = logging.getLogger(__name__)

SSIM_K1 = 0.01
SSIM_K2 = 0.03
GAUSSIAN_WINDOW = 11
GAUSSIAN_SIGMA = 1.5
BLOCK_WINDOW = 8


# masked L1


def _as_array(x: AudioClip | Spectrogram | NDArray) -> NDArray:
    if isinstance(x, AudioClip):
        return x.samples
    if isinstance(x, Spectrogram):
        return x.bins
    return np.asarray(x, dtype=np.float64)


def _broadcast_mask(mask: NDArray, shape: tuple[int, ...]) -> NDArray[np.float64]:
    mask = (np.asarray(mask) > 0).astype(np.float64)
    if len(shape) >= 2 and mask.shape == (shape[-1],):
        # a frame mask applies to every frequency bin
        mask = mask[None, :]
    try:
        return np.broadcast_to(mask, shape)
    except ValueError:
        raise ShapeMismatchError(f"mask shape {mask.shape} does not align with {shape}") from None


def masked_l1(
    output: AudioClip | Spectrogram | NDArray,
    target: AudioClip | Spectrogram | NDArray,
    mask: NDArray,
) -> float:
    """Mean |output - target| over masked positions; 0 (with a warning) for an empty mask."""
    o, t = _as_array(output), _as_array(target)
    if o.shape != t.shape:
        raise ShapeMismatchError(f"masked_l1 shapes differ: {o.shape} vs {t.shape}")
    m = _broadcast_mask(mask, o.shape)
    count = m.sum()
    if count == 0:
        warn_empty_mask("masked_l1")
        return 0.0
    return float(np.sum(np.abs(o - t) * m) / count)


def masked_l1_loss(output: Tensor, target: NDArray, mask: NDArray) -> Tensor:
    """Differentiable masked L1; the gradient is exactly zero off the mask."""
    target = np.asarray(target, dtype=output.dtype)
    if output.shape != target.shape:
        raise ShapeMismatchError(f"masked_l1_loss shapes differ: {output.shape} vs {target.shape}")
    m = _broadcast_mask(mask, output.shape).astype(output.dtype)
    count = m.sum()
    if count == 0:
        warn_empty_mask("masked_l1_loss")
        return (output * 0.0).sum()
    return ((output - target).abs() * m).sum() / float(count)


# SSIM


def _gaussian_kernel(size: int = GAUSSIAN_WINDOW, sigma: float = GAUSSIAN_SIGMA) -> NDArray:
    g = gaussian(size, sigma)
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _block_means(x: NDArray, size: int) -> NDArray:
    rows, cols = x.shape[0] // size, x.shape[1] // size
    blocks = x[: rows * size, : cols * size].reshape(rows, size, cols, size)
    return blocks.mean(axis=(1, 3))


def ssim(
    a: Spectrogram | NDArray,
    b: Spectrogram | NDArray,
    window: Literal["gaussian", "block"] = "gaussian",
    data_range: float | None = None,
) -> float:
    """
    Mean local structural similarity of two (F, T) matrices.

    gaussian: 11x11 sliding Gaussian window (sigma 1.5), valid positions only
    block:    8x8 non-overlapping blocks, trailing partial blocks dropped
    Dynamic range defaults to the larger maximum of the two inputs.
    """
    x, y = _as_array(a), _as_array(b)
    if np.iscomplexobj(x) or np.iscomplexobj(y):
        raise DataError("ssim needs magnitude or log-magnitude inputs")
    if x.shape != y.shape or x.ndim != 2:
        raise ShapeMismatchError(f"ssim needs two equal 2-D inputs, got {x.shape} and {y.shape}")
    size = GAUSSIAN_WINDOW if window == "gaussian" else BLOCK_WINDOW
    if min(x.shape) < size:
        raise DataError(f"ssim input {x.shape} is smaller than the {size}x{size} window")

    L = data_range if data_range is not None else float(max(x.max(), y.max()))
    if L <= 0:
        L = 1.0
    c1, c2 = (SSIM_K1 * L) ** 2, (SSIM_K2 * L) ** 2

    if window == "gaussian":
        kernel = _gaussian_kernel()

        def local(z: NDArray) -> NDArray:
            return correlate2d(z, kernel, mode="valid")

    else:

        def local(z: NDArray) -> NDArray:
            return _block_means(z, BLOCK_WINDOW)

    mu_x, mu_y = local(x), local(y)
    var_x = local(x * x) - mu_x * mu_x
    var_y = local(y * y) - mu_y * mu_y
    cov = local(x * y) - mu_x * mu_y
    numerator = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(numerator / denominator))


# perceptual backbones


class BackboneSchedule(BaseModel):
    model_config = ConfigDict(extra="forbid")

    steps: int = Field(300, ge=0)
    batch_size: int = Field(16, ge=1)
    lr: float = Field(3e-3, ge=0)
    min_accuracy: float = Field(0.6, ge=0, le=1)
    log_every: int = Field(50, ge=1)


def backbone_config(
    domain: Domain, class_count: int, stft_params: StftParams | None = None
) -> ModelConfig:
    """
    waveform:    6 conv1d, kernel 9, stride 4, channels [16,16,32,32,64,64]
    spectrogram: 5 conv2d, kernel 3x3, stride 2, channels [16,16,32,32,64]
    Both end in global average pooling and a dense head.
    """
    if domain == "waveform":
        kind, kernel, stride, channels = "conv1d", 9, 4, [16, 16, 32, 32, 64, 64]
    else:
        kind, kernel, stride, channels = "conv2d", 3, 2, [16, 16, 32, 32, 64]
    layers = []
    cin = 1
    for cout in channels:
        layers.append(
            LayerSpec(kind=kind, in_channels=cin, out_channels=cout, kernel=kernel, stride=stride)
        )
        cin = cout
    return ModelConfig(
        name=f"{domain}-backbone",
        domain=domain,
        role="classifier",
        layers=tuple(layers),
        input_channels=1,
        class_count=class_count,
        stft=stft_params if domain == "spectrogram" else None,
    )


@dataclass
class PerceptualBackbone:
    """Classifier whose last conv activation is the perceptual feature map."""

    domain: Domain
    network: ConvNetwork
    class_count: int
    accuracy: float | None = None
    trained: bool = False

    def __post_init__(self) -> None:
        self.freeze()

    def freeze(self) -> None:
        for param in self.network.params.values():
            param.requires_grad = False
            param.grad = None

    @property
    def feature_tap(self) -> int:
        return self.network.feature_tap

    @property
    def stft(self) -> StftParams | None:
        return self.network.config.stft

    def prepare(self, x: AudioClip | Spectrogram | NDArray) -> NDArray:
        """Backbone input (1, 1, *spatial) for a clip or spectrogram in this backbone's domain."""
        if isinstance(x, AudioClip):
            if self.domain == "waveform":
                return x.samples[None, None]
            assert self.stft is not None
            return log_magnitude(x, self.stft).bins[None, None]
        if isinstance(x, Spectrogram):
            if self.domain != "spectrogram":
                raise ConfigurationError("waveform backbone cannot take a spectrogram")
            if x.kind == "complex":
                x = magnitude(x)
            if x.kind == "magnitude":
                x = log_compress(x)
            return x.bins[None, None]
        return np.asarray(x, dtype=np.float64)

    def features(self, inputs: NDArray | Tensor) -> Tensor:
        x = inputs if isinstance(inputs, Tensor) else Tensor(inputs)
        return self.network.trunk(x)

    def _require_trained(self) -> None:
        if not self.trained:
            raise ConfigurationError(
                f"{self.domain} backbone is untrained",
                suggestion="Train it with `inpaintctl train-backbone` or load a trained checkpoint",
            )


def perceptual_distance(
    output: AudioClip | Spectrogram | NDArray,
    target: AudioClip | Spectrogram | NDArray,
    backbone: PerceptualBackbone,
) -> float:
    """Mean |features(output) - features(target)| over the whole tap-layer feature map."""
    backbone._require_trained()
    fo = backbone.features(backbone.prepare(output)).values
    ft = backbone.features(backbone.prepare(target)).values
    if fo.shape != ft.shape:
        raise ShapeMismatchError(f"feature maps differ: {fo.shape} vs {ft.shape}")
    return float(np.mean(np.abs(fo - ft)))


def perceptual_loss(output: Tensor, target: NDArray, backbone: PerceptualBackbone) -> Tensor:
    """Differentiable perceptual term for a batch (N, *spatial) of inpainter outputs."""
    backbone._require_trained()
    target = np.asarray(target)
    if output.shape != target.shape:
        raise ShapeMismatchError(f"perceptual_loss shapes differ: {output.shape} vs {target.shape}")
    channel_shape = (output.shape[0], 1, *output.shape[1:])
    fo = backbone.features(output.reshape(*channel_shape))
    ft = backbone.features(target.reshape(channel_shape)).values
    return (fo - ft).abs().mean()


def _class_counts(clips: Sequence[LabeledClip]) -> dict[int, int]:
    counts: dict[int, int] = {}
    for item in clips:
        counts[item.label] = counts.get(item.label, 0) + 1
    return counts


def train_backbone(
    train_clips: Sequence[LabeledClip],
    held_out: Sequence[LabeledClip],
    domain: Domain,
    schedule: BackboneSchedule | None = None,
    seed: int = 0,
    stft_params: StftParams | None = None,
) -> PerceptualBackbone:
    """Cross-entropy training from scratch; the held-out accuracy must clear ``min_accuracy``."""
    schedule = schedule or BackboneSchedule()
    counts = _class_counts([*train_clips, *held_out])
    if len(counts) < 2:
        raise DataError("backbone training needs at least 2 classes")
    if min(counts.values()) < 20:
        raise DataError(
            f"backbone training needs >= 20 examples per class, smallest class has {min(counts.values())}"
        )
    if not held_out:
        raise DataError("backbone training needs a held-out split")
    class_count = max(counts) + 1

    with log_stage(f"backbone[{domain}]"):
        network = ConvNetwork.initialize(
            backbone_config(domain, class_count, stft_params or StftParams()), seed
        )
        untrained = PerceptualBackbone(domain, network, class_count)
        # freezing is for use as a loss; re-enable gradients while training
        for param in network.params.values():
            param.requires_grad = True

        inputs = np.concatenate([untrained.prepare(item.clip) for item in train_clips])
        labels = np.array([item.label for item in train_clips])
        optimizer = Adam(network.params, lr=schedule.lr)
        rng = derive_rng(seed, "backbone-batches", domain)
        loss_value = float("nan")
        for step in range(1, schedule.steps + 1):
            batch = rng.choice(len(inputs), size=min(schedule.batch_size, len(inputs)), replace=False)
            optimizer.zero_grad()
            loss = cross_entropy(network.forward(Tensor(inputs[batch])), labels[batch])
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise BackboneTrainingError(
                    f"{domain} backbone loss became non-finite at step {step}",
                    context={"step": step},
                )
            loss.backward()
            optimizer.step()
            logger.debug(f"step {step}: loss {loss_value:.6f}")
            if step % schedule.log_every == 0:
                logger.info(f"step {step}/{schedule.steps}: loss {loss_value:.4f}")

        backbone = PerceptualBackbone(domain, network, class_count, trained=True)
        backbone.accuracy = classification_accuracy(backbone, held_out)
        logger.info(f"held-out accuracy {backbone.accuracy:.3f}")
    if backbone.accuracy < schedule.min_accuracy:
        raise BackboneTrainingError(
            f"{domain} backbone reached {backbone.accuracy:.1%} held-out accuracy, "
            f"below the {schedule.min_accuracy:.0%} floor",
            suggestion="Raise backbone.steps or backbone.lr",
            context={
                "accuracy": backbone.accuracy,
                "final_loss": loss_value,
                "steps": schedule.steps,
                "class_counts": counts,
            },
        )
    return backbone


def classification_accuracy(backbone: PerceptualBackbone, clips: Sequence[LabeledClip]) -> float:
    inputs = np.concatenate([backbone.prepare(item.clip) for item in clips])
    logits = backbone.network.forward(Tensor(inputs)).values
    labels = np.array([item.label for item in clips])
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def save_backbone(path: str | Path, backbone: PerceptualBackbone) -> Path:
    backbone._require_trained()
    return save_model(
        path,
        backbone.network,
        extra={
            "backbone": {
                "domain": backbone.domain,
                "class_count": backbone.class_count,
                "accuracy": backbone.accuracy,
                "feature_tap": backbone.feature_tap,
            }
        },
    )


def load_backbone(path: str | Path) -> PerceptualBackbone:
    info = read_sidecar(path).get("backbone")
    if info is None:
        raise ConfigurationError(f"{path} is not a backbone checkpoint")
    network = load_model(path)
    return PerceptualBackbone(
        info["domain"], network, int(info["class_count"]), info.get("accuracy"), trained=True
    )


# combined loss


class LossConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    l1_weight: float = Field(1.0, gt=0)
    perceptual_weight: float = Field(0.1, ge=0)


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    l1: float
    perceptual: float | None = None

    def as_dict(self) -> dict[str, float | None]:
        return {"total": self.total, "l1": self.l1, "perceptual": self.perceptual}


def combined_loss(
    output: Tensor,
    target: NDArray,
    mask: NDArray,
    weights: LossConfig,
    backbone: PerceptualBackbone | None = None,
) -> tuple[Tensor, LossBreakdown]:
    """l1_weight * masked L1 + perceptual_weight * perceptual distance."""
    if weights.perceptual_weight > 0 and backbone is None:
        raise ConfigurationError(
            "perceptual_weight > 0 needs a perceptual backbone",
            suggestion="Pass --backbone or set loss.perceptual_weight=0",
        )
    l1 = masked_l1_loss(output, target, mask)
    total = l1 * weights.l1_weight
    perceptual: Tensor | None = None
    if weights.perceptual_weight > 0 and backbone is not None:
        perceptual = perceptual_loss(output, target, backbone)
        total = total + perceptual * weights.perceptual_weight
    breakdown = LossBreakdown(
        total=total.item(),
        l1=l1.item(),
        perceptual=perceptual.item() if perceptual is not None else None,
    )
    return total, breakdown


# evaluation records


@dataclass(frozen=True)
class MetricRecord:
    """Metrics for one clip."""

    clip_id: str
    masked_l1: float
    ssim: float
    wave_perc_dist: float | None = None
    spec_perc_dist: float | None = None

    def __post_init__(self) -> None:
        values = (self.masked_l1, self.ssim, self.wave_perc_dist, self.spec_perc_dist)
        if not all(np.isfinite(v) for v in values if v is not None):
            raise DataError(f"non-finite metric for {self.clip_id}: {values}")
        if self.ssim > 1.0 + 1e-12:
            raise DataError(f"ssim {self.ssim} > 1 for {self.clip_id}")

    def row(self) -> dict[str, object]:
        return {
            "clip_id": self.clip_id,
            "ml1": self.masked_l1,
            "ssim": self.ssim,
            "wave_pdist": self.wave_perc_dist,
            "spec_pdist": self.spec_perc_dist,
        }


def hardware_descriptor() -> str:
    memory = psutil.virtual_memory().total / 2**30
    cores = psutil.cpu_count(logical=False) or psutil.cpu_count() or 0
    return (
        f"{platform.processor() or platform.machine()}, {cores} cores, "
        f"{memory:.1f} GiB RAM, Python {platform.python_version()}"
    )


@dataclass(frozen=True)
class InferenceSpeed:
    clips_per_minute: float
    clip_count: int
    warmup_seconds: float
    hardware: str = field(default_factory=hardware_descriptor)

    def as_dict(self) -> dict[str, object]:
        return {
            "clips_per_minute": self.clips_per_minute,
            "clip_count": self.clip_count,
            "warmup_seconds": self.warmup_seconds,
            "hardware": self.hardware,
        }


def inference_speed(
    run: Callable[[AudioClip], AudioClip],
    clips: Sequence[AudioClip],
    clock: Callable[[], float] = time.perf_counter,
) -> InferenceSpeed:
    """Clips per minute over ``clips``; one warmup call is timed separately and excluded."""
    if len(clips) < 5:
        raise DataError(f"inference_speed needs at least 5 clips, got {len(clips)}")
    start = clock()
    run(clips[0])
    warmup = clock() - start

    start = clock()
    for clip in clips:
        run(clip)
    elapsed = max(clock() - start, 1e-9)
    return InferenceSpeed(60.0 * len(clips) / elapsed, len(clips), warmup)
