#!/usr/bin/env python3
"""
Signal-processing kernel: windowed STFT/ISTFT, magnitude and log-magnitude
transforms, and Griffin-Lim phase reconstruction.

Conventions:
    - frames are taken from the signal reflection-padded by window_width/2 on
      both ends; frame t covers padded samples [t*hop, t*hop + window_width)
    - spectrogram bins have shape (fft_size/2 + 1, time_frames)
    - the inverse is window-weighted overlap-add normalised by the overlap-added
      squared window, the least-squares inverse of the analysis operator
"""

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.signal import check_COLA, get_window

from inpainting.errors import (
    DataError,
    ShapeMismatchError,
    SpectrogramKindError,
    validate_positive_int,
)
from inpainting.seeding import derive_rng

logger = logging.getLogger(__name__)

SpectrogramKind = Literal["complex", "magnitude", "log_magnitude"]

# Overlap-added squared window below this is treated as uncovered.
_WSS_FLOOR = 1e-10


@dataclass(frozen=True)
class AudioClip:
    """Mono audio: samples in [-1, 1] (clamped only when written out)."""

    samples: NDArray[np.float64]
    sample_rate: int

    def __post_init__(self) -> None:
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ShapeMismatchError(f"AudioClip must be mono 1-D, got shape {samples.shape}")
        if samples.size < 1:
            raise DataError("AudioClip must contain at least one sample")
        if not np.all(np.isfinite(samples)):
            raise DataError("AudioClip samples must be finite")
        if int(self.sample_rate) <= 0:
            raise DataError(f"sample_rate must be positive, got {self.sample_rate}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def with_samples(self, samples: NDArray[np.float64]) -> "AudioClip":
        return AudioClip(samples, self.sample_rate)

    def seconds_to_samples(self, seconds: float) -> int:
        return int(round(seconds * self.sample_rate))


class StftParams(BaseModel):
    """Window width, hop and FFT size of the time-frequency grid."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    window_width: int = Field(512, ge=2)
    hop: int = Field(128, ge=1)
    fft_size: int | None = None
    window: str = "hann"

    @model_validator(mode="after")
    def _check_grid(self) -> "StftParams":
        if self.window_width % 2:
            raise ValueError("window_width must be even (reflection pad is window_width/2)")
        if self.hop > self.window_width:
            raise ValueError(f"hop {self.hop} exceeds window_width {self.window_width}")
        n_fft = self.n_fft
        if n_fft < self.window_width or n_fft & (n_fft - 1):
            raise ValueError(f"fft_size {n_fft} must be a power of two >= window_width")
        if not check_COLA(self.window_array(), self.window_width, self.window_width - self.hop):
            raise ValueError(
                f"window {self.window!r} with width {self.window_width} and hop {self.hop} "
                "does not satisfy constant-overlap-add"
            )
        return self

    @property
    def n_fft(self) -> int:
        if self.fft_size is not None:
            return self.fft_size
        return 1 << (self.window_width - 1).bit_length()

    @property
    def frequency_bins(self) -> int:
        return self.n_fft // 2 + 1

    @property
    def pad(self) -> int:
        return self.window_width // 2

    def window_array(self) -> NDArray[np.float64]:
        # periodic (fftbins=True) variant
        return np.asarray(get_window(self.window, self.window_width, fftbins=True), dtype=np.float64)

    def frame_count(self, length: int) -> int:
        padded = length + 2 * self.pad
        return (padded - self.window_width) // self.hop + 1


@dataclass(frozen=True)
class Spectrogram:
    """Time-frequency matrix with its grid and the length of the source signal."""

    bins: NDArray
    params: StftParams
    kind: SpectrogramKind
    length: int
    sample_rate: int

    def __post_init__(self) -> None:
        bins = np.array(self.bins)
        expected = (self.params.frequency_bins, self.params.frame_count(self.length))
        if bins.shape != expected:
            raise ShapeMismatchError(f"spectrogram shape {bins.shape} != expected {expected}")
        if self.kind == "complex":
            bins = bins.astype(np.complex128)
        else:
            if np.iscomplexobj(bins):
                raise SpectrogramKindError(f"{self.kind} spectrogram cannot hold complex bins")
            bins = bins.astype(np.float64)
            if np.any(bins < 0):
                raise SpectrogramKindError(f"{self.kind} spectrogram entries must be >= 0")
        bins.setflags(write=False)
        object.__setattr__(self, "bins", bins)

    @property
    def shape(self) -> tuple[int, int]:
        return self.bins.shape  # type: ignore[return-value]

    @property
    def time_frames(self) -> int:
        return int(self.bins.shape[1])

    def with_bins(self, bins: NDArray, kind: SpectrogramKind | None = None) -> "Spectrogram":
        return Spectrogram(bins, self.params, kind or self.kind, self.length, self.sample_rate)


def _require_kind(spec: Spectrogram, *kinds: str) -> None:
    if spec.kind not in kinds:
        raise SpectrogramKindError(f"expected {' or '.join(kinds)} spectrogram, got {spec.kind}")


def _frame_indices(n_frames: int, params: StftParams) -> NDArray[np.intp]:
    starts = np.arange(n_frames) * params.hop
    return starts[:, None] + np.arange(params.window_width)[None, :]


def _reflect_pad(samples: NDArray, params: StftParams) -> NDArray:
    if samples.shape[-1] <= params.pad:
        raise DataError(
            f"signal of {samples.shape[-1]} samples is too short for reflection padding "
            f"of {params.pad} (window_width {params.window_width})"
        )
    return np.pad(samples, (params.pad, params.pad), mode="reflect")


def _analyze(padded: NDArray[np.float64], params: StftParams, n_frames: int) -> NDArray:
    frames = padded[_frame_indices(n_frames, params)] * params.window_array()
    return np.fft.rfft(frames, n=params.n_fft, axis=1).T


def _synthesize(bins: NDArray, params: StftParams) -> NDArray[np.float64]:
    """Least-squares signal on the padded domain for a (possibly inconsistent) STFT."""
    n_frames = bins.shape[1]
    window = params.window_array()
    frames = np.fft.irfft(bins.T, n=params.n_fft, axis=1)[:, : params.window_width] * window
    total = (n_frames - 1) * params.hop + params.window_width
    signal = np.zeros(total)
    wss = np.zeros(total)
    idx = _frame_indices(n_frames, params)
    # unbuffered and applied in index order, so accumulation is reproducible
    np.add.at(signal, idx, frames)
    np.add.at(wss, idx, np.broadcast_to(window**2, frames.shape))
    covered = wss > _WSS_FLOOR
    signal[covered] /= wss[covered]
    signal[~covered] = 0.0
    return signal


def stft(clip: AudioClip, params: StftParams) -> Spectrogram:
    """Complex STFT of a clip on the reflection-padded frame grid."""
    n_frames = params.frame_count(len(clip))
    bins = _analyze(_reflect_pad(clip.samples, params), params, n_frames)
    return Spectrogram(bins, params, "complex", len(clip), clip.sample_rate)


def istft(spec: Spectrogram) -> AudioClip:
    """Overlap-add inverse; exact for consistent spectrograms."""
    _require_kind(spec, "complex")
    params = spec.params
    padded = _synthesize(spec.bins, params)
    samples = padded[params.pad : params.pad + spec.length]
    return AudioClip(samples, spec.sample_rate)


def magnitude(spec: Spectrogram) -> Spectrogram:
    _require_kind(spec, "complex")
    return spec.with_bins(np.abs(spec.bins), "magnitude")


def log_compress(spec: Spectrogram) -> Spectrogram:
    """log(1 + magnitude)."""
    _require_kind(spec, "magnitude")
    return spec.with_bins(np.log1p(spec.bins), "log_magnitude")


def log_expand(spec: Spectrogram) -> Spectrogram:
    """Inverse of log_compress: exp(l) - 1."""
    _require_kind(spec, "log_magnitude")
    return spec.with_bins(np.expm1(spec.bins), "magnitude")


def log_magnitude(clip: AudioClip, params: StftParams) -> Spectrogram:
    return log_compress(magnitude(stft(clip, params)))


def _hermitian_weights(params: StftParams) -> NDArray[np.float64]:
    weights = np.full(params.frequency_bins, 2.0)
    weights[0] = 1.0
    if params.n_fft % 2 == 0:
        weights[-1] = 1.0
    return weights


def spectral_distance(a: NDArray, b: NDArray, params: StftParams) -> float:
    """Frobenius norm of a - b over the full (Hermitian-extended) spectrum."""
    if a.shape != b.shape:
        raise ShapeMismatchError(f"spectral_distance shapes differ: {a.shape} vs {b.shape}")
    power = np.abs(a - b) ** 2
    return float(np.sqrt(np.sum(_hermitian_weights(params)[:, None] * power)))


def stft_energy_normalizer(params: StftParams) -> float:
    """
    Parseval normaliser: full-spectrum STFT energy equals this times the signal
    energy, for windows whose squared overlap-add is constant (Hann at hop
    window_width/4) and signals that vanish near the padded edges.
    """
    window = params.window_array()
    return float(params.n_fft * np.sum(window**2) / params.hop)


@dataclass(frozen=True)
class PhaseSeed:
    """Initial phase for Griffin-Lim: zero, random(seed) or known phases outside a frame mask."""

    mode: Literal["zero", "random", "keep_known"] = "zero"
    seed: int = 0
    known: Spectrogram | None = None
    frame_mask: NDArray[np.bool_] | None = None

    @classmethod
    def zero(cls) -> "PhaseSeed":
        return cls("zero")

    @classmethod
    def random(cls, seed: int) -> "PhaseSeed":
        return cls("random", seed=seed)

    @classmethod
    def keep_known(cls, known: Spectrogram, frame_mask: NDArray) -> "PhaseSeed":
        return cls("keep_known", known=known, frame_mask=np.asarray(frame_mask, dtype=bool))


@dataclass(frozen=True)
class GriffinLimResult:
    clip: AudioClip
    # consistency error after initial synthesis, then after each iteration
    errors: tuple[float, ...]


def griffin_lim(
    target: Spectrogram,
    iterations: int = 60,
    phase_seed: PhaseSeed | None = None,
) -> GriffinLimResult:
    """
    Recover a signal whose STFT magnitude approximates ``target``.

    Alternates least-squares synthesis with magnitude replacement. Iterates on
    the padded signal so each synthesis is the exact least-squares step and the
    consistency error is non-increasing. With keep_known seeding, frames
    outside the mask have their phases reset to the known phases every iteration.
    """
    _require_kind(target, "magnitude")
    if iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {iterations}")
    seed = phase_seed or PhaseSeed.zero()
    params = target.params
    amplitude = target.bins
    n_frames = target.time_frames

    known_phase: NDArray | None = None
    known_frames: NDArray[np.bool_] | None = None
    if seed.mode == "zero":
        phase = np.zeros(amplitude.shape)
    elif seed.mode == "random":
        phase = derive_rng(seed.seed, "griffin_lim").uniform(-np.pi, np.pi, amplitude.shape)
    else:
        if seed.known is None or seed.frame_mask is None:
            raise ValueError("keep_known phase seed needs a known spectrogram and a frame mask")
        _require_kind(seed.known, "complex")
        if seed.known.shape != target.shape:
            raise ShapeMismatchError(
                f"phase-seed spectrogram {seed.known.shape} != target {target.shape}"
            )
        if seed.frame_mask.shape != (n_frames,):
            raise ShapeMismatchError(
                f"frame mask length {seed.frame_mask.shape} != {n_frames} frames"
            )
        known_phase = np.angle(seed.known.bins)
        known_frames = ~seed.frame_mask
        phase = np.where(known_frames[None, :], known_phase, 0.0)

    padded = _synthesize(amplitude * np.exp(1j * phase), params)
    errors = [_consistency_error(padded, amplitude, params, n_frames)]
    for iteration in range(iterations):
        phase = np.angle(_analyze(padded, params, n_frames))
        if known_phase is not None and known_frames is not None:
            phase[:, known_frames] = known_phase[:, known_frames]
        padded = _synthesize(amplitude * np.exp(1j * phase), params)
        errors.append(_consistency_error(padded, amplitude, params, n_frames))
        logger.debug(f"griffin_lim iteration {iteration + 1}: error {errors[-1]:.6e}")

    samples = padded[params.pad : params.pad + target.length]
    return GriffinLimResult(AudioClip(samples, target.sample_rate), tuple(errors))


def _consistency_error(
    padded: NDArray[np.float64], amplitude: NDArray, params: StftParams, n_frames: int
) -> float:
    return spectral_distance(np.abs(_analyze(padded, params, n_frames)), amplitude, params)


def frame_mask(sample_mask: NDArray, params: StftParams) -> NDArray[np.bool_]:
    """A frame is masked iff any sample it windows (reflected copies included) is masked."""
    mask = np.asarray(sample_mask, dtype=np.float64)
    n_frames = params.frame_count(mask.size)
    padded = _reflect_pad(mask, params)
    return np.any(padded[_frame_indices(n_frames, params)] > 0, axis=1)


def frame_rms(samples: NDArray[np.float64], frame_length: int) -> NDArray[np.float64]:
    """RMS over consecutive non-overlapping frames (trailing partial frame dropped)."""
    validate_positive_int(frame_length, "frame_length")
    n = samples.size // frame_length
    if n == 0:
        return np.zeros(0)
    framed = samples[: n * frame_length].reshape(n, frame_length)
    return np.sqrt(np.mean(framed**2, axis=1))
