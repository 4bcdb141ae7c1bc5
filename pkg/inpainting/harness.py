#!/usr/bin/env python3
"""
Benchmark harness: training loop, evaluation protocol with reference rows,
the mask-length x receptive-field ablation, and report emission.

Reports are deterministic given the seeds; wall-clock timing goes to a
separate timing.json so metric files stay byte-identical across runs.
"""

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from contextvars import copy_context
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Iterable, Literal, Sequence, TypeVar

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator

from inpainting.checkpoint import weights_digest
from inpainting.diffcore import Adam
from inpainting.dsp import (
    AudioClip,
    StftParams,
    frame_rms,
    griffin_lim,
    log_magnitude,
    magnitude,
    stft,
)
from inpainting.errors import (
    ConfigurationError,
    DataError,
    NumericalError,
    TrainingDivergedError,
    validate_non_empty,
)
from inpainting.logging_config import log_stage
from inpainting.losses import (
    InferenceSpeed,
    LossConfig,
    MetricRecord,
    PerceptualBackbone,
    combined_loss,
    inference_speed,
    masked_l1,
    perceptual_distance,
    save_backbone,
    ssim,
    train_backbone,
)
from inpainting.models import (
    ConvNetwork,
    ablation_spectrogram_config,
    default_spectrogram_config,
    default_waveform_config,
    inpaint_clip,
    inpainter_forward,
    resolve_pipeline,
    save_model,
    spectrogram_inputs,
)
from inpainting.protocol import (
    FixedMask,
    LabeledClip,
    MaskSpec,
    augment_tile_crop,
    generate_corpus,
    mask_for_policy,
    random_mask_spec,
    write_corpus,
    zero_masked,
)
from inpainting.seeding import derive_rng, derive_seed

if TYPE_CHECKING:
    from inpainting.config import ExperimentConfig

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class TrainSchedule(BaseModel):
    model_config = ConfigDict(extra="forbid")

    steps: int = Field(3000, ge=0)
    lr: float = Field(1e-3, ge=0)
    batch_size: int = Field(4, ge=1)
    mask_seconds: float = Field(0.2, gt=0)
    mask_policy: Literal["random", "fixed"] = "random"
    val_every: int = Field(250, ge=1)
    log_every: int = Field(100, ge=1)
    dtype: Literal["float64", "float32"] = "float64"
    # None follows the corpus preset
    augment: bool | None = None
    # stop once validation masked L1 reaches this value
    stop_below: float | None = Field(None, gt=0)


class EvaluationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mask_start: float = Field(0.4, gt=0)
    mask_end: float = Field(0.6, gt=0)
    gl_iterations: int = Field(60, ge=0)
    gl_phase: Literal["zero", "keep_known"] = "zero"
    ssim_window: Literal["gaussian", "block"] = "gaussian"

    @model_validator(mode="after")
    def _check_interval(self) -> "EvaluationConfig":
        if self.mask_end <= self.mask_start:
            raise ValueError("evaluation mask_end must be after mask_start")
        return self

    @property
    def mask_seconds(self) -> float:
        return self.mask_end - self.mask_start

    def mask_for(self, clip: AudioClip) -> MaskSpec:
        return mask_for_policy(
            clip, FixedMask(start_seconds=self.mask_start, end_seconds=self.mask_end)
        )


class DetectorConfig(BaseModel):
    """Silence-collapse detector constants."""

    model_config = ConfigDict(extra="forbid")

    frame_seconds: float = Field(0.01, gt=0)
    # per side; 0.5 s of context in total
    context_seconds: float = Field(0.25, gt=0)
    min_run_fraction: float = Field(0.25, gt=0, le=1)
    rms_ratio: float = Field(0.1, gt=0, lt=1)


class AblationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mask_seconds: list[float] = Field(default_factory=lambda: [0.1, 0.15, 0.2])
    time_dilations: list[list[int]] = Field(
        default_factory=lambda: [
            [1, 1, 1, 1, 1, 1],
            [1, 2, 2, 2, 2, 1],
            [1, 2, 4, 4, 2, 1],
            [1, 2, 4, 8, 4, 2],
            [2, 4, 8, 8, 4, 2],
        ]
    )
    width: int = Field(16, ge=1)
    steps: int = Field(400, ge=0)
    batch_size: int = Field(4, ge=1)
    lr: float = Field(1e-3, ge=0)
    clips: int = Field(8, ge=1)
    gl_iterations: int = Field(32, ge=0)


def parallel_map(fn: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> list[R]:
    """Ordered map; threads when jobs > 1."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs, thread_name_prefix="inpainting") as executor:
        # each worker call runs in a copy of the caller's context (log stage included)
        futures = [executor.submit(copy_context().run, fn, item) for item in items]
        return [future.result() for future in futures]


# training


@dataclass(frozen=True)
class TrainingBatch:
    inputs: NDArray  # (B, 2, *spatial)
    target: NDArray  # (B, *spatial)
    mask: NDArray  # (B, *spatial), 1 = masked


def example_arrays(
    domain: str, clip: AudioClip, mask: MaskSpec, stft_params: StftParams | None
) -> tuple[NDArray, NDArray, NDArray]:
    """Model input, target and loss mask for one clip in the model's domain."""
    sample_mask = mask.sample_mask()
    if domain == "waveform":
        masked = np.where(sample_mask > 0, 0.0, clip.samples)
        return np.stack([masked, sample_mask]), clip.samples, sample_mask
    assert stft_params is not None
    log_spec = log_magnitude(clip, stft_params).bins
    frames = mask.frame_mask(stft_params)
    masked = np.where(frames[None, :], 0.0, log_spec)
    loss_mask = np.broadcast_to(frames[None, :].astype(np.float64), log_spec.shape)
    return spectrogram_inputs(masked, frames), log_spec, loss_mask


def make_batch(
    domain: str,
    clips: Sequence[AudioClip],
    step: int,
    schedule: TrainSchedule,
    seed: int,
    stft_params: StftParams | None,
    evaluation: EvaluationConfig,
    augment: bool,
) -> TrainingBatch:
    rng = derive_rng(seed, "train-batch", step)
    indices = rng.choice(len(clips), size=schedule.batch_size, replace=len(clips) < schedule.batch_size)
    examples = []
    for slot, index in enumerate(indices):
        clip = clips[int(index)]
        if augment:
            clip = augment_tile_crop(clip, clip.duration, derive_seed(seed, "augment", step, slot))
        if schedule.mask_policy == "fixed":
            mask = evaluation.mask_for(clip)
        else:
            mask = random_mask_spec(
                len(clip),
                clip.seconds_to_samples(schedule.mask_seconds),
                derive_rng(seed, "train-mask", step, slot),
            )
        examples.append(example_arrays(domain, clip, mask, stft_params))
    inputs, target, mask = (np.stack(parts) for parts in zip(*examples))
    return TrainingBatch(inputs, target, mask)


def validation_loss(
    model: ConvNetwork, clips: Sequence[AudioClip], evaluation: EvaluationConfig
) -> float:
    """Mean masked L1 in the model's own domain under the fixed evaluation mask."""
    network = model.inference_copy()
    values = []
    for clip in clips:
        inputs, target, mask = example_arrays(
            model.config.domain, clip, evaluation.mask_for(clip), model.config.stft
        )
        output = inpainter_forward(network, inputs[None]).values[0]
        values.append(masked_l1(output, target, mask))
    return float(np.mean(values))


@dataclass
class TrainResult:
    model: ConvNetwork
    curve: list[float]
    breakdowns: list[dict[str, float | None]] = field(default_factory=list)
    best_val: float | None = None
    best_step: int | None = None
    checkpoints: dict[str, Path] = field(default_factory=dict)


def _write_curve(path: Path, breakdowns: list[dict[str, float | None]]) -> None:
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=["step", "total", "l1", "perceptual"])
        writer.writeheader()
        for step, row in enumerate(breakdowns, start=1):
            writer.writerow({"step": step, **{k: "" if v is None else v for k, v in row.items()}})


def train(
    model: ConvNetwork,
    clips: Sequence[AudioClip],
    loss_config: LossConfig,
    schedule: TrainSchedule,
    seed: int = 0,
    *,
    backbone: PerceptualBackbone | None = None,
    val_clips: Sequence[AudioClip] = (),
    evaluation: EvaluationConfig | None = None,
    augment: bool = False,
    out_dir: str | Path | None = None,
) -> TrainResult:
    """
    Adam on random masks over ``clips``.

    Deterministic given ``seed``. When ``out_dir`` is set the final and best
    validation checkpoints and loss_curve.csv are written there. A non-finite
    loss or gradient aborts with the last good weights saved.
    """
    domain = model.config.domain
    if model.config.role != "inpainter":
        raise ConfigurationError(f"{model.config.name} is not an inpainter")
    if backbone is not None and loss_config.perceptual_weight > 0 and backbone.domain != domain:
        raise ConfigurationError(
            f"a {backbone.domain} perceptual backbone cannot train a {domain} model",
            suggestion=f"Use a {domain} backbone or set loss.perceptual_weight=0",
        )
    if not clips:
        raise DataError("training needs at least one clip")
    evaluation = evaluation or EvaluationConfig()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    optimizer = Adam(model.params, lr=schedule.lr)
    result = TrainResult(model, [])
    best_weights: dict[str, NDArray] | None = None

    def diverged(step: int, reason: str) -> TrainingDivergedError:
        checkpoint = None
        if out is not None:
            checkpoint = str(save_model(out / "last_good.ckpt", model))
        return TrainingDivergedError(f"training diverged at step {step}: {reason}", step, checkpoint)

    with log_stage(f"train[{domain}]"):
        logger.info(
            f"Training {model.config.name} ({domain}): {schedule.steps} steps, "
            f"batch {schedule.batch_size}, lr {schedule.lr}, {len(clips)} clips"
        )
        for step in range(1, schedule.steps + 1):
            batch = make_batch(
                domain, clips, step, schedule, seed, model.config.stft, evaluation, augment
            )
            optimizer.zero_grad()
            output = inpainter_forward(model, batch.inputs)
            loss, breakdown = combined_loss(output, batch.target, batch.mask, loss_config, backbone)
            if not math.isfinite(breakdown.total):
                raise diverged(step, f"loss is {breakdown.total}")
            loss.backward()
            try:
                optimizer.step()
            except NumericalError as e:
                raise diverged(step, e.message) from e

            result.curve.append(breakdown.total)
            result.breakdowns.append(breakdown.as_dict())
            logger.debug(f"step {step}: loss {breakdown.total:.6e}")
            if step % schedule.log_every == 0:
                logger.info(f"step {step}/{schedule.steps}: loss {breakdown.total:.5f}")

            if val_clips and (step % schedule.val_every == 0 or step == schedule.steps):
                val = validation_loss(model, val_clips, evaluation)
                logger.info(f"step {step}: validation masked L1 {val:.5f}")
                if result.best_val is None or val < result.best_val:
                    result.best_val, result.best_step = val, step
                    best_weights = model.weights()
                if schedule.stop_below is not None and val <= schedule.stop_below:
                    logger.info(f"step {step}: validation reached {schedule.stop_below}, stopping")
                    break

    if out is not None:
        result.checkpoints["final"] = save_model(out / "final.ckpt", model)
        best = ConvNetwork.from_weights(model.config, best_weights) if best_weights else model
        result.checkpoints["best"] = save_model(out / "best.ckpt", best)
        _write_curve(out / "loss_curve.csv", result.breakdowns)
    return result


# evaluation

ROW_MODEL = "model"
ROW_MASKED_INPUT = "masked_input"
ROW_GL_GT = "griffin_lim_gt"
ROWS = (ROW_MODEL, ROW_MASKED_INPUT, ROW_GL_GT)
METRIC_COLUMNS = {
    "ml1": "masked_l1",
    "ssim": "ssim",
    "wave_pdist": "wave_perc_dist",
    "spec_pdist": "spec_perc_dist",
}


def _column_mean(records: Sequence[MetricRecord], attr: str) -> float | None:
    values = [getattr(r, attr) for r in records]
    if not values or any(v is None for v in values):
        return None
    return float(np.mean(values))


@dataclass
class BenchmarkReport:
    """Per-clip metric rows for the model and the two reference rows."""

    rows: dict[str, list[MetricRecord]]
    run_config: dict[str, Any]

    def aggregate(self) -> dict[str, dict[str, float | None]]:
        return {
            row: {column: _column_mean(records, attr) for column, attr in METRIC_COLUMNS.items()}
            for row, records in self.rows.items()
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "run": self.run_config,
            "clip_count": len(self.rows.get(ROW_MODEL, [])),
            "aggregate": self.aggregate(),
        }

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "metrics.csv"
        with csv_path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=["row", "clip_id", *METRIC_COLUMNS])
            writer.writeheader()
            for row, records in self.rows.items():
                for record in records:
                    values = {k: "" if v is None else v for k, v in record.row().items()}
                    writer.writerow({"row": row, **values})
        json_path = out / "summary.json"
        json_path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info(f"Wrote report to {csv_path} and {json_path}")
        return csv_path, json_path


def clip_metrics(
    clip_id: str,
    output: AudioClip,
    truth: AudioClip,
    sample_mask: NDArray,
    stft_params: StftParams,
    ssim_window: Literal["gaussian", "block"] = "gaussian",
    wave_backbone: PerceptualBackbone | None = None,
    spec_backbone: PerceptualBackbone | None = None,
) -> MetricRecord:
    return MetricRecord(
        clip_id=clip_id,
        masked_l1=masked_l1(output, truth, sample_mask),
        ssim=ssim(
            log_magnitude(output, stft_params), log_magnitude(truth, stft_params), ssim_window
        ),
        wave_perc_dist=perceptual_distance(output, truth, wave_backbone) if wave_backbone else None,
        spec_perc_dist=perceptual_distance(output, truth, spec_backbone) if spec_backbone else None,
    )


def evaluate(
    model: ConvNetwork,
    pipeline: str,
    clips: Sequence[LabeledClip],
    evaluation: EvaluationConfig,
    *,
    wave_backbone: PerceptualBackbone | None = None,
    spec_backbone: PerceptualBackbone | None = None,
    stft_params: StftParams | None = None,
    jobs: int = 1,
    run_info: dict[str, Any] | None = None,
) -> BenchmarkReport:
    """
    Metrics on paste-backed model outputs under the fixed evaluation mask,
    alongside the Masked Input (zeros in the gap) and Griffin-Lim GT
    (GL of the true magnitude, not paste-backed) reference rows.
    """
    pipeline = resolve_pipeline(pipeline)
    if not clips:
        raise DataError("evaluation needs at least one clip")
    params = stft_params or model.config.stft or StftParams()
    digest_before = weights_digest(model.weights())

    def evaluate_clip(item: LabeledClip) -> dict[str, MetricRecord]:
        mask = evaluation.mask_for(item.clip)
        sample_mask = mask.sample_mask()
        outputs = {
            ROW_MODEL: inpaint_clip(
                pipeline, item.clip, sample_mask, model, evaluation.gl_iterations, evaluation.gl_phase
            ),
            ROW_MASKED_INPUT: zero_masked(item.clip, mask),
            ROW_GL_GT: griffin_lim(magnitude(stft(item.clip, params)), evaluation.gl_iterations).clip,
        }
        records = {
            row: clip_metrics(
                item.clip_id,
                output,
                item.clip,
                sample_mask,
                params,
                evaluation.ssim_window,
                wave_backbone,
                spec_backbone,
            )
            for row, output in outputs.items()
        }
        logger.debug(f"{item.clip_id}: {records[ROW_MODEL].row()}")
        return records

    with log_stage(f"evaluate[{pipeline}]"):
        per_clip = parallel_map(evaluate_clip, list(clips), jobs)
    if weights_digest(model.weights()) != digest_before:
        raise NumericalError(f"model weights changed during evaluation of {model.config.name}")

    report = BenchmarkReport(
        rows={row: [records[row] for records in per_clip] for row in ROWS},
        run_config={
            "pipeline": pipeline,
            "model": model.config.name,
            "model_config_sha256": model.config.config_hash(),
            "weights_sha256": digest_before,
            "mask": {"start_seconds": evaluation.mask_start, "end_seconds": evaluation.mask_end},
            "evaluation": evaluation.model_dump(mode="json"),
            **(run_info or {}),
        },
    )
    with log_stage(f"evaluate[{pipeline}]"):
        for row, values in report.aggregate().items():
            logger.info(f"{row}: {values}")
    return report


def measure_inference(
    model: ConvNetwork,
    pipeline: str,
    clips: Sequence[LabeledClip],
    evaluation: EvaluationConfig,
) -> InferenceSpeed | None:
    """Throughput of the full inpainting pipeline; None below 5 clips."""
    if len(clips) < 5:
        logger.warning(f"Skipping inference timing: {len(clips)} clips (need 5)")
        return None

    def run(clip: AudioClip) -> AudioClip:
        return inpaint_clip(
            pipeline,
            clip,
            evaluation.mask_for(clip).sample_mask(),
            model,
            evaluation.gl_iterations,
            evaluation.gl_phase,
        )

    return inference_speed(run, [item.clip for item in clips])


# ablation


@dataclass(frozen=True)
class DetectorResult:
    success: bool
    longest_quiet_samples: int
    threshold_rms: float


def _longest_run(flags: Iterable[bool]) -> int:
    longest = current = 0
    for flag in flags:
        current = current + 1 if flag else 0
        longest = max(longest, current)
    return longest


def detect_collapse(output: AudioClip, mask: MaskSpec, config: DetectorConfig) -> DetectorResult:
    """
    Fail when the masked region holds a quiet run of at least min_run_fraction
    of the mask length, quiet meaning frame RMS below rms_ratio times the
    median frame RMS of the surrounding context.
    """
    frame = max(1, output.seconds_to_samples(config.frame_seconds))
    context = output.seconds_to_samples(config.context_seconds)
    samples = output.samples
    before = samples[max(0, mask.start - context) : mask.start]
    after = samples[mask.end : mask.end + context]
    context_rms = np.concatenate([frame_rms(before, frame), frame_rms(after, frame)])
    if context_rms.size == 0 or np.median(context_rms) == 0:
        return DetectorResult(True, 0, 0.0)
    threshold = config.rms_ratio * float(np.median(context_rms))
    inside = frame_rms(samples[mask.start : mask.end], frame)
    quiet = _longest_run(inside < threshold) * frame
    success = quiet < config.min_run_fraction * mask.masked_samples
    return DetectorResult(bool(success), int(quiet), threshold)


@dataclass(frozen=True)
class AblationCell:
    mask_seconds: float
    mask_frames: int
    receptive_field: int
    architecture: str
    l1: float
    spec_perc: float | None
    success: bool
    passed_clips: int
    clip_count: int

    def row(self) -> dict[str, object]:
        return {
            "mask_seconds": self.mask_seconds,
            "mask_frames": self.mask_frames,
            "receptive_field": self.receptive_field,
            "l1": self.l1,
            "spec_perc": "" if self.spec_perc is None else self.spec_perc,
            "success": self.success,
        }


@dataclass
class AblationTable:
    cells: list[AblationCell]

    def thresholds(self) -> dict[float, int | None]:
        """
        Smallest receptive field from which every larger one succeeds, per mask
        length; None when nothing succeeds or the pattern is not a clean step.
        """
        result: dict[float, int | None] = {}
        for mask_seconds in sorted({c.mask_seconds for c in self.cells}):
            group = sorted(
                (c for c in self.cells if c.mask_seconds == mask_seconds),
                key=lambda c: c.receptive_field,
            )
            flags = [c.success for c in group]
            first = next((i for i, ok in enumerate(flags) if ok), None)
            if first is None or not all(flags[first:]):
                result[mask_seconds] = None
            else:
                result[mask_seconds] = group[first].receptive_field
        return result

    def is_step_pattern(self) -> bool:
        """Every mask length shows fail-then-succeed and the threshold never decreases."""
        thresholds = self.thresholds()
        values = list(thresholds.values())
        if any(v is None for v in values):
            return False
        return all(a <= b for a, b in zip(values, values[1:]))  # type: ignore[operator]

    def write(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "ablation.csv"
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(
                f,
                fieldnames=["mask_seconds", "mask_frames", "receptive_field", "l1", "spec_perc", "success"],
            )
            writer.writeheader()
            for cell in self.cells:
                writer.writerow(cell.row())
        summary = {
            "thresholds": {str(k): v for k, v in self.thresholds().items()},
            "step_pattern": self.is_step_pattern(),
            "cells": [
                {
                    **cell.row(),
                    "architecture": cell.architecture,
                    "passed_clips": cell.passed_clips,
                    "clip_count": cell.clip_count,
                }
                for cell in self.cells
            ],
        }
        (out / "ablation.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info(f"Wrote ablation table to {path}")
        return path


def centered_mask(clip: AudioClip, seconds: float) -> MaskSpec:
    half = seconds / 2
    middle = clip.duration / 2
    return mask_for_policy(clip, FixedMask(start_seconds=middle - half, end_seconds=middle + half))


def ablate(
    train_clips: Sequence[AudioClip],
    test_clips: Sequence[LabeledClip],
    ablation: AblationConfig,
    detector: DetectorConfig,
    stft_params: StftParams,
    seed: int = 0,
    *,
    spec_backbone: PerceptualBackbone | None = None,
    jobs: int = 1,
) -> AblationTable:
    """
    Train and evaluate one spectrogram model per (mask length, architecture)
    cell. Widths are fixed; only time dilations (hence the receptive field)
    change. A cell succeeds when most evaluated clips pass the detector.
    """
    validate_non_empty(ablation.mask_seconds, "ablation.mask_seconds")
    validate_non_empty(ablation.time_dilations, "ablation.time_dilations")
    eval_clips = list(test_clips)[: ablation.clips]
    grid = [(m, tuple(d)) for m in ablation.mask_seconds for d in ablation.time_dilations]

    def run_cell(cell: tuple[float, tuple[int, ...]]) -> AblationCell:
        mask_seconds, dilations = cell
        config = ablation_spectrogram_config(dilations, ablation.width, stft_params)
        with log_stage(f"ablate[{mask_seconds}s {config.name}]"):
            model = ConvNetwork.initialize(
                config, derive_seed(seed, "ablation", mask_seconds, dilations)
            )
            schedule = TrainSchedule(
                steps=ablation.steps,
                lr=ablation.lr,
                batch_size=ablation.batch_size,
                mask_seconds=mask_seconds,
                log_every=max(1, ablation.steps),
            )
            train(
                model,
                train_clips,
                LossConfig(perceptual_weight=0.0),
                schedule,
                derive_seed(seed, "ablation-train", mask_seconds),
            )

            l1_values, perc_values, passed = [], [], 0
            mask_frames = 0
            for item in eval_clips:
                mask = centered_mask(item.clip, mask_seconds)
                mask_frames = int(mask.frame_mask(stft_params).sum())
                output = inpaint_clip(
                    "spectrogram", item.clip, mask.sample_mask(), model, ablation.gl_iterations
                )
                l1_values.append(masked_l1(output, item.clip, mask.sample_mask()))
                if spec_backbone is not None:
                    perc_values.append(perceptual_distance(output, item.clip, spec_backbone))
                passed += detect_collapse(output, mask, detector).success

            result = AblationCell(
                mask_seconds=mask_seconds,
                mask_frames=mask_frames,
                receptive_field=config.receptive_field()[-1],
                architecture=config.name,
                l1=float(np.mean(l1_values)),
                spec_perc=float(np.mean(perc_values)) if perc_values else None,
                success=2 * passed > len(eval_clips),
                passed_clips=passed,
                clip_count=len(eval_clips),
            )
            verdict = "PASS" if result.success else "FAIL"
            logger.info(
                f"{result.mask_frames} mask frames, RF {result.receptive_field}: "
                f"{verdict} ({passed}/{len(eval_clips)}), l1 {result.l1:.4f}"
            )
            return result

    return AblationTable(parallel_map(run_cell, grid, jobs))


# full benchmark


def run_benchmark(config: "ExperimentConfig", out_dir: str | Path, jobs: int = 1) -> dict[str, Any]:
    """
    Corpus -> perceptual backbones -> both inpainting pipelines trained and
    evaluated. Everything lands under ``out_dir``; returns the aggregates.
    """
    out = Path(out_dir)
    corpus = generate_corpus(config.corpus)
    write_corpus(corpus, out / "corpus")
    train_items = corpus.split("train")
    val_items = corpus.split("val")
    test_items = corpus.split("test")
    held_out = [*val_items, *test_items]
    augment = config.train.augment if config.train.augment is not None else config.corpus.augment

    backbones: dict[str, PerceptualBackbone] = {}
    for domain in ("waveform", "spectrogram"):
        backbone = train_backbone(
            train_items,
            held_out,
            domain,  # type: ignore[arg-type]
            config.backbone,
            derive_seed(config.seed, "backbone", domain),
            config.stft,
        )
        save_backbone(out / "backbones" / f"{domain}.ckpt", backbone)
        backbones[domain] = backbone

    corpus_hash = config.corpus.config_hash()
    dtype = np.float32 if config.train.dtype == "float32" else np.float64
    summary: dict[str, Any] = {}
    timing: dict[str, Any] = {}
    for pipeline in ("waveform", "spectrogram"):
        if pipeline == "waveform":
            model_config = default_waveform_config(
                config.evaluation.mask_seconds, config.corpus.sample_rate
            )
        else:
            model_config = default_spectrogram_config(config.stft)
        model = ConvNetwork.initialize(model_config, derive_seed(config.seed, "init", pipeline), dtype)
        result = train(
            model,
            [item.clip for item in train_items],
            config.loss,
            config.train,
            derive_seed(config.seed, "train", pipeline),
            backbone=backbones[pipeline] if config.loss.perceptual_weight > 0 else None,
            val_clips=[item.clip for item in val_items],
            evaluation=config.evaluation,
            augment=augment,
            out_dir=out / pipeline,
        )
        report = evaluate(
            result.model,
            pipeline,
            test_items,
            config.evaluation,
            wave_backbone=backbones["waveform"],
            spec_backbone=backbones["spectrogram"],
            stft_params=config.stft,
            jobs=jobs,
            run_info={"corpus_sha256": corpus_hash, "seed": config.seed},
        )
        report.write(out / pipeline)
        summary[pipeline] = report.aggregate()
        speed = measure_inference(result.model, pipeline, test_items, config.evaluation)
        if speed is not None:
            timing[pipeline] = speed.as_dict()

    (out / "timing.json").write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary
