#!/usr/bin/env python3
"""
Benchmark data protocol: the deterministic synthetic corpus, masks and the
tile-and-crop augmentation.

Two presets ship:
    toy-sc   1 s clips, 10 classes of aperiodic one-shot "words"
    toy-esc  5 s clips, 6 classes of repetitive texture loops
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Any, Literal, Union

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.signal import butter, sosfiltfilt

from inpainting.dsp import AudioClip, StftParams, frame_mask
from inpainting.errors import DataError
from inpainting.seeding import derive_rng
from inpainting.wavio import read_wav, write_wav

logger = logging.getLogger(__name__)

SignalFamily = Literal[
    "tone_chord", "linear_chirp", "am_noise_bursts", "square_wave", "filtered_noise", "harmonic_stack"
]
Split = Literal["train", "val", "test"]
SPLITS: tuple[Split, ...] = ("train", "val", "test")


class ClassGenerator(BaseModel):
    """Parameterised signal family for one class."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    family: SignalFamily
    params: dict[str, float | list[float]] = Field(default_factory=dict)


class CorpusSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "toy-sc"
    class_count: int = Field(10, ge=2)
    examples_per_class: int = Field(30, ge=1)
    clip_seconds: float = Field(1.0, gt=0)
    sample_rate: int = Field(16000, gt=0)
    seed: int = 0
    texture: Literal["one_shot", "loop"] = "one_shot"
    augment: bool = False
    class_generators: list[ClassGenerator] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_classes(self) -> "CorpusSpec":
        if len(self.class_generators) != self.class_count:
            raise ValueError(
                f"class_count {self.class_count} != {len(self.class_generators)} class generators"
            )
        return self

    @property
    def clip_samples(self) -> int:
        return int(round(self.clip_seconds * self.sample_rate))

    def class_name(self, label: int) -> str:
        return f"c{label:02d}_{self.class_generators[label].family}"

    def config_hash(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()


def _gen(family: str, **params: float | list[float]) -> ClassGenerator:
    return ClassGenerator(family=family, params=params)  # type: ignore[arg-type]


PRESETS: dict[str, dict[str, Any]] = {
    "toy-sc": {
        "name": "toy-sc",
        "class_count": 10,
        "examples_per_class": 30,
        "clip_seconds": 1.0,
        "texture": "one_shot",
        "augment": False,
        "class_generators": [
            _gen("tone_chord", base=220.0, ratios=[1.0, 1.25, 1.5]),
            _gen("tone_chord", base=330.0, ratios=[1.0, 1.2, 1.5]),
            _gen("linear_chirp", f0=300.0, f1=1800.0),
            _gen("linear_chirp", f0=2000.0, f1=400.0),
            _gen("am_noise_bursts", rate=4.0, low=500.0, high=3000.0),
            _gen("am_noise_bursts", rate=11.0, low=1500.0, high=5000.0),
            _gen("square_wave", freq=150.0),
            _gen("filtered_noise", low=2000.0, high=4000.0),
            _gen("harmonic_stack", f0=180.0, harmonics=6.0),
            _gen("harmonic_stack", f0=420.0, harmonics=3.0),
        ],
    },
    "toy-esc": {
        "name": "toy-esc",
        "class_count": 6,
        "examples_per_class": 20,
        "clip_seconds": 5.0,
        "texture": "loop",
        "augment": True,
        "class_generators": [
            _gen("tone_chord", base=260.0, ratios=[1.0, 1.26, 1.5]),
            _gen("linear_chirp", f0=400.0, f1=2400.0),
            _gen("am_noise_bursts", rate=6.0, low=800.0, high=4000.0),
            _gen("square_wave", freq=110.0),
            _gen("filtered_noise", low=300.0, high=1200.0),
            _gen("harmonic_stack", f0=140.0, harmonics=8.0),
        ],
    },
}


def preset(name: str, **overrides: Any) -> CorpusSpec:
    if name not in PRESETS:
        raise DataError(f"unknown corpus preset {name!r}", suggestion=f"Use one of {sorted(PRESETS)}")
    return CorpusSpec.model_validate({**PRESETS[name], **overrides})


# signal families; each returns an unnormalised signal over time axis t


def _jitter(rng: np.random.Generator) -> float:
    return float(rng.uniform(0.94, 1.06))


def _tone_chord(t: NDArray, p: dict, rng: np.random.Generator) -> NDArray:
    base = float(p["base"]) * _jitter(rng)
    return sum(
        np.sin(2 * np.pi * base * float(r) * t + rng.uniform(0, 2 * np.pi)) for r in p["ratios"]
    )


def _linear_chirp(t: NDArray, p: dict, rng: np.random.Generator) -> NDArray:
    f0, f1 = float(p["f0"]) * _jitter(rng), float(p["f1"]) * _jitter(rng)
    duration = t[-1] + (t[1] - t[0]) if t.size > 1 else 1.0
    phase = 2 * np.pi * (f0 * t + 0.5 * (f1 - f0) / duration * t**2)
    return np.sin(phase + rng.uniform(0, 2 * np.pi))


def _band_noise(n: int, low: float, high: float, sr: int, rng: np.random.Generator) -> NDArray:
    nyquist = sr / 2
    sos = butter(4, [low / nyquist, min(high, 0.95 * nyquist) / nyquist], btype="band", output="sos")
    return sosfiltfilt(sos, rng.standard_normal(n))


def _am_noise_bursts(t: NDArray, p: dict, rng: np.random.Generator, sr: int) -> NDArray:
    rate = float(p["rate"]) * _jitter(rng)
    noise = _band_noise(t.size, float(p["low"]), float(p["high"]), sr, rng)
    # floor keeps the texture free of silent gaps
    envelope = 0.3 + 0.7 * (0.5 + 0.5 * np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)))
    return envelope * noise / (np.max(np.abs(noise)) + 1e-12)


def _square_wave(t: NDArray, p: dict, rng: np.random.Generator) -> NDArray:
    freq = float(p["freq"]) * _jitter(rng)
    return np.sign(np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi)) + 1e-9)


def _filtered_noise(t: NDArray, p: dict, rng: np.random.Generator, sr: int) -> NDArray:
    return _band_noise(t.size, float(p["low"]) * _jitter(rng), float(p["high"]), sr, rng)


def _harmonic_stack(t: NDArray, p: dict, rng: np.random.Generator) -> NDArray:
    f0 = float(p["f0"]) * _jitter(rng)
    return sum(
        np.sin(2 * np.pi * f0 * h * t + rng.uniform(0, 2 * np.pi)) / h
        for h in range(1, int(p["harmonics"]) + 1)
    )


def synthesize(generator: ClassGenerator, n: int, sr: int, rng: np.random.Generator) -> NDArray:
    t = np.arange(n) / sr
    p = generator.params
    if generator.family == "tone_chord":
        return _tone_chord(t, p, rng)
    if generator.family == "linear_chirp":
        return _linear_chirp(t, p, rng)
    if generator.family == "am_noise_bursts":
        return _am_noise_bursts(t, p, rng, sr)
    if generator.family == "square_wave":
        return _square_wave(t, p, rng)
    if generator.family == "filtered_noise":
        return _filtered_noise(t, p, rng, sr)
    return _harmonic_stack(t, p, rng)


@dataclass(frozen=True)
class LabeledClip:
    clip_id: str
    label: int
    class_name: str
    split: Split
    seed: int
    clip: AudioClip


@dataclass(frozen=True)
class Corpus:
    spec: CorpusSpec
    clips: tuple[LabeledClip, ...]

    def split(self, name: Split) -> list[LabeledClip]:
        return [c for c in self.clips if c.split == name]


def split_for_index(index: int, count: int) -> Split:
    """70/10/20 train/val/test by example index within its class."""
    if index < round(0.7 * count):
        return "train"
    if index < round(0.8 * count):
        return "val"
    return "test"


def generate_clip(spec: CorpusSpec, label: int, index: int) -> tuple[AudioClip, int]:
    rng = derive_rng(spec.seed, spec.name, label, index)
    clip_seed = int(rng.integers(0, 2**31 - 1))
    n = spec.clip_samples
    generator = spec.class_generators[label]

    if spec.texture == "loop":
        period = int(round(rng.uniform(0.25, 0.6) * spec.sample_rate))
        cell = synthesize(generator, min(period, n), spec.sample_rate, rng)
        fade = min(64, cell.size // 4)
        if fade:
            # short crossfade at the seam
            ramp = np.linspace(0.0, 1.0, fade)
            cell[:fade] = cell[:fade] * ramp + cell[-fade:][::-1] * (1 - ramp)
        signal = np.tile(cell, n // cell.size + 1)[:n]
    else:
        signal = synthesize(generator, n, spec.sample_rate, rng)
        t = np.arange(n) / spec.sample_rate
        center = rng.uniform(0.3, 0.7) * spec.clip_seconds
        width = rng.uniform(0.15, 0.3) * spec.clip_seconds
        signal = signal * (0.35 + 0.65 * np.exp(-(((t - center) / width) ** 2)))

    peak = rng.uniform(0.5, 0.95)
    signal = signal / (np.max(np.abs(signal)) + 1e-12) * peak
    return AudioClip(signal, spec.sample_rate), clip_seed


def generate_corpus(spec: CorpusSpec) -> Corpus:
    """Every clip is a pure function of (spec, seed)."""
    clips: list[LabeledClip] = []
    for label in range(spec.class_count):
        for index in range(spec.examples_per_class):
            clip, clip_seed = generate_clip(spec, label, index)
            clips.append(
                LabeledClip(
                    clip_id=f"{spec.class_name(label)}-{index:03d}",
                    label=label,
                    class_name=spec.class_name(label),
                    split=split_for_index(index, spec.examples_per_class),
                    seed=clip_seed,
                    clip=clip,
                )
            )
    logger.info(
        f"Generated corpus {spec.name}: {len(clips)} clips, "
        f"{spec.class_count} classes, {spec.clip_seconds}s @ {spec.sample_rate} Hz"
    )
    return Corpus(spec, tuple(clips))


MANIFEST_NAME = "manifest.json"


def write_corpus(corpus: Corpus, out_dir: str | Path) -> Path:
    """WAV per clip plus manifest.json (clip_id, class, split, path, seed)."""
    out_dir = Path(out_dir)
    entries = []
    for item in corpus.clips:
        relative = Path("clips") / f"{item.clip_id}.wav"
        write_wav(out_dir / relative, item.clip)
        entries.append(
            {
                "clip_id": item.clip_id,
                "class": item.class_name,
                "label": item.label,
                "split": item.split,
                "path": relative.as_posix(),
                "seed": item.seed,
            }
        )
    manifest = {"spec": corpus.spec.model_dump(mode="json"), "clips": entries}
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"Wrote {len(entries)} clips and manifest to {out_dir}")
    return path


def read_corpus(corpus_dir: str | Path) -> Corpus:
    corpus_dir = Path(corpus_dir)
    manifest_path = corpus_dir / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DataError(
            f"corpus manifest not found: {manifest_path}",
            suggestion="Run `inpaintctl gen-corpus` first",
        )
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        spec = CorpusSpec.model_validate(manifest["spec"])
        clips = tuple(
            LabeledClip(
                clip_id=entry["clip_id"],
                label=int(entry["label"]),
                class_name=entry["class"],
                split=entry["split"],
                seed=int(entry["seed"]),
                clip=read_wav(corpus_dir / entry["path"]),
            )
            for entry in manifest["clips"]
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"invalid corpus manifest {manifest_path}: {e}") from e
    return Corpus(spec, clips)


# masks


@dataclass(frozen=True)
class MaskSpec:
    """Contiguous masked interval [start, end) strictly inside a clip of ``length`` samples."""

    start: int
    end: int
    length: int

    def __post_init__(self) -> None:
        if not 0 < self.start < self.end < self.length:
            raise DataError(
                f"mask [{self.start}, {self.end}) must satisfy 0 < start < end < {self.length}",
                suggestion="Keep the mask strictly inside the clip",
            )

    @property
    def masked_samples(self) -> int:
        return self.end - self.start

    def sample_mask(self) -> NDArray[np.float64]:
        """1 = masked (invalid), 0 = valid."""
        mask = np.zeros(self.length)
        mask[self.start : self.end] = 1.0
        return mask

    def frame_mask(self, params: StftParams) -> NDArray[np.bool_]:
        return frame_mask(self.sample_mask(), params)

    @classmethod
    def from_seconds(cls, start: float, end: float, sample_rate: int, length: int) -> "MaskSpec":
        return cls(int(round(start * sample_rate)), int(round(end * sample_rate)), length)


class FixedMask(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["fixed"] = "fixed"
    start_seconds: float
    end_seconds: float


class RandomMask(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["random"] = "random"
    seconds: float = Field(gt=0)
    seed: int = 0


MaskPolicy = Annotated[Union[FixedMask, RandomMask], Field(discriminator="kind")]


def random_mask_spec(length: int, mask_samples: int, rng: np.random.Generator) -> MaskSpec:
    if mask_samples >= length - 1:
        raise DataError(f"mask of {mask_samples} samples does not fit a clip of {length}")
    start = int(rng.integers(1, length - mask_samples))
    return MaskSpec(start, start + mask_samples, length)


def mask_for_policy(clip: AudioClip, policy: FixedMask | RandomMask) -> MaskSpec:
    if isinstance(policy, FixedMask):
        if policy.end_seconds <= policy.start_seconds:
            raise DataError("mask end must be after mask start")
        if policy.end_seconds - policy.start_seconds >= clip.duration:
            raise DataError("mask length must be shorter than the clip")
        return MaskSpec.from_seconds(
            policy.start_seconds, policy.end_seconds, clip.sample_rate, len(clip)
        )
    mask_samples = clip.seconds_to_samples(policy.seconds)
    return random_mask_spec(len(clip), mask_samples, derive_rng(policy.seed, "mask"))


def zero_masked(clip: AudioClip, mask: MaskSpec) -> AudioClip:
    samples = np.array(clip.samples)
    samples[mask.start : mask.end] = 0.0
    return clip.with_samples(samples)


def apply_mask(clip: AudioClip, policy: FixedMask | RandomMask) -> tuple[AudioClip, MaskSpec]:
    """Zero the masked samples; returns the masked clip and its MaskSpec."""
    mask = mask_for_policy(clip, policy)
    return zero_masked(clip, mask), mask


# augmentation


def tile_crop(clip: AudioClip, target_samples: int, offset: int) -> AudioClip:
    tiled = np.concatenate([clip.samples, clip.samples])
    if target_samples > tiled.size:
        raise DataError(
            f"target of {target_samples} samples exceeds the tiled length {tiled.size}"
        )
    if not 0 <= offset <= tiled.size - target_samples:
        raise DataError(f"crop offset {offset} out of range")
    return clip.with_samples(tiled[offset : offset + target_samples])


def augment_tile_crop(clip: AudioClip, target_seconds: float, seed: int) -> AudioClip:
    """Concatenate the clip with itself, then take a seeded random crop of the target length."""
    target = clip.seconds_to_samples(target_seconds)
    if target > 2 * len(clip):
        raise DataError(f"target {target_seconds}s is longer than the tiled clip")
    offset = int(derive_rng(seed, "tile_crop").integers(0, 2 * len(clip) - target + 1))
    return tile_crop(clip, target, offset)
