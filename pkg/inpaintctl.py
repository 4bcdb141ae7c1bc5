#!/usr/bin/env python3
"""
inpaintctl - command-line toolkit for deep long audio inpainting

Usage:
    inpaintctl gen-corpus --preset toy-sc --out data/toy-sc
    inpaintctl train-backbone --corpus data/toy-sc --domain waveform --out runs/backbones
    inpaintctl train --corpus data/toy-sc --pipeline wave --out runs/wave
    inpaintctl inpaint --in clip.wav --mask-start 0.4 --mask-end 0.6 --pipeline wave \\
        --ckpt runs/wave/best.ckpt --out filled.wav
    inpaintctl evaluate --corpus data/toy-sc --pipeline wave --ckpt runs/wave/best.ckpt --out runs/wave/eval
    inpaintctl ablate --corpus data/toy-sc --out runs/ablation
    inpaintctl benchmark --out runs/benchmark
    inpaintctl show-config --set train.steps=500

Every run writes resolved_config.json next to its outputs. Configuration
precedence: CLI flag > --set override > --config file > defaults.

Exit codes: 0 ok, 1 unexpected, 2 usage/configuration, 3 data, 4 numeric failure.
"""

import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable

import click
import numpy as np

from inpainting import __version__
from inpainting.config import (
    LOG_LEVELS,
    ExperimentConfig,
    RuntimeSettings,
    load_env_file,
    load_experiment_config,
    validate_config,
    write_resolved_config,
)
from inpainting.errors import EXIT_USAGE, ConfigurationError, InpaintingError, exit_on_error
from inpainting.harness import ablate, evaluate, measure_inference, run_benchmark, train
from inpainting.logging_config import log_run_shutdown, log_run_startup, log_stage, setup_logging
from inpainting.losses import PerceptualBackbone, load_backbone, save_backbone, train_backbone
from inpainting.models import (
    ConvNetwork,
    InpaintRequest,
    default_spectrogram_config,
    default_waveform_config,
    inpaint,
    load_model,
    load_model_config,
    require_clip_length,
    resolve_pipeline,
    save_model,
)
from inpainting.protocol import PRESETS, Corpus, MaskSpec, generate_corpus, read_corpus, write_corpus
from inpainting.seeding import derive_seed
from inpainting.wavio import read_wav, write_wav

logger = logging.getLogger("inpainting.cli")

PIPELINE_CHOICE = click.Choice(["wave", "spec", "waveform", "spectrogram"])


class Colors:
    GREEN = "\033[92m"
    RED = "\033[91m"
    YELLOW = "\033[93m"
    CYAN = "\033[96m"
    RESET = "\033[0m"


def print_success(text: str) -> None:
    click.echo(f"{Colors.GREEN}✓{Colors.RESET} {text}")


def print_error(text: str) -> None:
    click.echo(f"{Colors.RED}✗{Colors.RESET} {text}", err=True)


def print_warning(text: str) -> None:
    click.echo(f"{Colors.YELLOW}⚠{Colors.RESET} {text}", err=True)


def print_info(text: str) -> None:
    click.echo(f"{Colors.CYAN}ℹ{Colors.RESET} {text}")


def experiment_options(seed_help: str = "Root seed for every random stream") -> Callable:
    """--config, --set, --seed, --out and --jobs shared by the run commands."""

    def decorator(func: Callable) -> Callable:
        options = [
            click.option(
                "--config",
                "config_path",
                type=click.Path(path_type=Path, dir_okay=False),
                help="Experiment config JSON file",
            ),
            click.option(
                "--set",
                "overrides",
                multiple=True,
                metavar="SECTION.KEY=VALUE",
                help="Override one config value (repeatable)",
            ),
            click.option("--seed", type=int, default=None, help=seed_help),
            click.option(
                "--out",
                "out_dir",
                type=click.Path(path_type=Path, file_okay=False),
                required=True,
                help="Output directory",
            ),
            click.option("--jobs", type=click.IntRange(min=1), default=None, help="Worker threads"),
        ]
        for option in reversed(options):
            func = option(func)
        return func

    return decorator


def resolve(
    config_path: Path | None, overrides: tuple[str, ...], flags: dict[str, Any] | None = None
) -> ExperimentConfig:
    return load_experiment_config(config_path, overrides, flags)


def jobs_for(ctx: click.Context, jobs: int | None) -> int:
    settings: RuntimeSettings = ctx.obj
    return jobs if jobs is not None else settings.jobs


def load_or_generate_corpus(corpus_dir: Path | None, config: ExperimentConfig) -> Corpus:
    if corpus_dir is not None:
        return read_corpus(corpus_dir)
    logger.info(f"No --corpus given; generating {config.corpus.name} in memory")
    return generate_corpus(config.corpus)


def start_run(name: str, config: ExperimentConfig, out_dir: Path, **extra: Any) -> None:
    write_resolved_config(config, out_dir, {"command": name, **extra})
    log_run_startup(logger, f"inpaintctl {name}", config.model_dump(mode="json"))


# ──────────────────────────── CLI Commands ────────────────────────────


@click.group(invoke_without_command=True, context_settings={"help_option_names": ["-h", "--help"]})
@click.option(
    "--log-level",
    type=click.Choice(LOG_LEVELS, case_sensitive=False),
    default=None,
    help="Log level (default from INPAINTING_LOG_LEVEL, else INFO)",
)
@click.option(
    "--log-file", type=click.Path(path_type=Path, dir_okay=False), default=None, help="Also log to this file"
)
@click.option("--color/--no-color", default=False, help="Colored console logs")
@click.option("--version", is_flag=True, help="Show version")
@click.pass_context
def cli(ctx, log_level, log_file, color, version):
    """inpaintctl - deep long audio inpainting toolkit"""
    if version:
        click.echo(f"inpaintctl version {__version__}")
        ctx.exit(0)

    load_env_file()
    settings = RuntimeSettings()
    if log_level:
        settings.log_level = settings.console_level = log_level.upper()
    try:
        validate_config(settings)
    except ConfigurationError as e:
        print_error(e.message)
        ctx.exit(EXIT_USAGE)
    setup_logging(
        log_level=settings.log_level,
        log_file=log_file,
        console_level=settings.console_level,
        use_colors=color,
    )
    ctx.obj = settings

    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())
    else:
        ctx.with_resource(log_stage(ctx.invoked_subcommand))


@cli.command("gen-corpus")
@click.option(
    "--preset",
    type=click.Choice(sorted(PRESETS)),
    default=None,
    help="Corpus preset (default toy-sc unless the config file defines the corpus)",
)
@experiment_options(seed_help="Corpus seed")
@click.pass_context
@exit_on_error(logger)
def gen_corpus(ctx, preset, config_path, overrides, seed, out_dir, jobs):
    """Generate the synthetic corpus: WAV clips plus manifest.json."""
    config = resolve(config_path, overrides, {"corpus.preset": preset, "corpus.seed": seed})
    start_run("gen-corpus", config, out_dir)
    corpus = generate_corpus(config.corpus)
    manifest = write_corpus(corpus, out_dir)
    digest = hashlib.sha256(manifest.read_bytes()).hexdigest()
    print_success(f"{len(corpus.clips)} clips ({config.corpus.class_count} classes) in {out_dir}")
    print_info(f"manifest sha256 {digest}")
    log_run_shutdown(logger, "inpaintctl gen-corpus")


@cli.command("train-backbone")
@click.option("--corpus", "corpus_dir", type=click.Path(path_type=Path, file_okay=False), help="Corpus directory")
@click.option("--domain", type=click.Choice(["waveform", "spectrogram"]), required=True)
@experiment_options()
@click.pass_context
@exit_on_error(logger)
def train_backbone_cmd(ctx, corpus_dir, domain, config_path, overrides, seed, out_dir, jobs):
    """Train a perceptual classifier backbone on the corpus."""
    config = resolve(config_path, overrides, {"seed": seed})
    start_run("train-backbone", config, out_dir, domain=domain)
    corpus = load_or_generate_corpus(corpus_dir, config)
    backbone = train_backbone(
        corpus.split("train"),
        [*corpus.split("val"), *corpus.split("test")],
        domain,
        config.backbone,
        derive_seed(config.seed, "backbone", domain),
        config.stft,
    )
    path = save_backbone(out_dir / f"{domain}.ckpt", backbone)
    print_success(f"{domain} backbone: held-out accuracy {backbone.accuracy:.1%} -> {path}")
    log_run_shutdown(logger, "inpaintctl train-backbone")


def build_model(pipeline: str, arch: Path | None, config: ExperimentConfig) -> ConvNetwork:
    domain = resolve_pipeline(pipeline)
    if arch is not None:
        model_config = load_model_config(arch)
        if model_config.domain != domain:
            raise ConfigurationError(f"architecture {arch} is {model_config.domain}, pipeline is {domain}")
    elif domain == "waveform":
        model_config = default_waveform_config(config.evaluation.mask_seconds, config.corpus.sample_rate)
    else:
        model_config = default_spectrogram_config(config.stft)
    dtype = np.float32 if config.train.dtype == "float32" else np.float64
    return ConvNetwork.initialize(model_config, derive_seed(config.seed, "init", domain), dtype)


def optional_backbone(path: Path | None) -> PerceptualBackbone | None:
    return load_backbone(path) if path is not None else None


@cli.command("train")
@click.option("--corpus", "corpus_dir", type=click.Path(path_type=Path, file_okay=False), help="Corpus directory")
@click.option("--pipeline", type=PIPELINE_CHOICE, required=True)
@click.option("--arch", type=click.Path(path_type=Path, dir_okay=False), help="Architecture JSON (ModelConfig)")
@click.option("--backbone", "backbone_path", type=click.Path(path_type=Path, dir_okay=False), help="Perceptual backbone checkpoint")
@experiment_options()
@click.pass_context
@exit_on_error(logger)
def train_cmd(ctx, corpus_dir, pipeline, arch, backbone_path, config_path, overrides, seed, out_dir, jobs):
    """Train an inpainting model with random masks."""
    config = resolve(config_path, overrides, {"seed": seed})
    start_run("train", config, out_dir, pipeline=resolve_pipeline(pipeline))
    corpus = load_or_generate_corpus(corpus_dir, config)
    model = build_model(pipeline, arch, config)
    augment = config.train.augment if config.train.augment is not None else corpus.spec.augment
    result = train(
        model,
        [item.clip for item in corpus.split("train")],
        config.loss,
        config.train,
        derive_seed(config.seed, "train", model.config.domain),
        backbone=optional_backbone(backbone_path),
        val_clips=[item.clip for item in corpus.split("val")],
        evaluation=config.evaluation,
        augment=augment,
        out_dir=out_dir,
    )
    final = result.curve[-1] if result.curve else float("nan")
    print_success(f"trained {model.config.name}: final loss {final:.5f}")
    for name, path in result.checkpoints.items():
        print_info(f"{name} checkpoint: {path}")
    log_run_shutdown(logger, "inpaintctl train")


@cli.command("inpaint")
@click.option("--in", "in_path", type=click.Path(path_type=Path, dir_okay=False), required=True, help="Input WAV")
@click.option("--mask-start", type=float, required=True, help="Mask start (seconds)")
@click.option("--mask-end", type=float, required=True, help="Mask end (seconds)")
@click.option("--pipeline", type=PIPELINE_CHOICE, required=True)
@click.option("--ckpt", type=click.Path(path_type=Path, dir_okay=False), required=True, help="Model checkpoint")
@click.option("--out", "out_path", type=click.Path(path_type=Path, dir_okay=False), required=True, help="Output WAV")
@click.option("--gl-iterations", type=click.IntRange(min=0), default=None, help="Griffin-Lim iterations")
@click.option("--gl-phase", type=click.Choice(["zero", "keep_known"]), default=None, help="Griffin-Lim phase seed")
@click.option("--config", "config_path", type=click.Path(path_type=Path, dir_okay=False), help="Experiment config JSON file")
@click.option("--set", "overrides", multiple=True, metavar="SECTION.KEY=VALUE", help="Override one config value")
@click.pass_context
@exit_on_error(logger)
def inpaint_cmd(ctx, in_path, mask_start, mask_end, pipeline, ckpt, out_path, gl_iterations, gl_phase, config_path, overrides):
    """Fill [mask-start, mask-end) of a WAV file."""
    if mask_end <= mask_start:
        raise ConfigurationError(
            f"--mask-end ({mask_end}) must be greater than --mask-start ({mask_start})"
        )
    config = resolve(
        config_path,
        overrides,
        {"evaluation.gl_iterations": gl_iterations, "evaluation.gl_phase": gl_phase},
    )
    clip = read_wav(in_path)
    mask = MaskSpec.from_seconds(mask_start, mask_end, clip.sample_rate, len(clip))
    model = load_model(ckpt)
    require_clip_length(model.config, clip)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    start_run(
        "inpaint",
        config,
        out_path.parent,
        input=str(in_path),
        checkpoint=str(ckpt),
        mask=[mask.start, mask.end],
        pipeline=resolve_pipeline(pipeline),
    )
    result = inpaint(
        pipeline,
        InpaintRequest(clip, mask),
        model,
        config.evaluation.gl_iterations,
        config.evaluation.gl_phase,
    )
    write_wav(out_path, result)
    print_success(f"inpainted samples {mask.start}..{mask.end} -> {out_path}")
    log_run_shutdown(logger, "inpaintctl inpaint")


@cli.command("evaluate")
@click.option("--corpus", "corpus_dir", type=click.Path(path_type=Path, file_okay=False), help="Corpus directory")
@click.option("--pipeline", type=PIPELINE_CHOICE, required=True)
@click.option("--ckpt", type=click.Path(path_type=Path, dir_okay=False), required=True, help="Model checkpoint")
@click.option("--wave-backbone", type=click.Path(path_type=Path, dir_okay=False), help="Waveform backbone checkpoint")
@click.option("--spec-backbone", type=click.Path(path_type=Path, dir_okay=False), help="Spectrogram backbone checkpoint")
@experiment_options()
@click.pass_context
@exit_on_error(logger)
def evaluate_cmd(ctx, corpus_dir, pipeline, ckpt, wave_backbone, spec_backbone, config_path, overrides, seed, out_dir, jobs):
    """Evaluate a checkpoint on the test split; writes metrics.csv and summary.json."""
    config = resolve(config_path, overrides, {"seed": seed})
    start_run("evaluate", config, out_dir, pipeline=resolve_pipeline(pipeline), checkpoint=str(ckpt))
    corpus = load_or_generate_corpus(corpus_dir, config)
    model = load_model(ckpt)
    test_items = corpus.split("test")
    report = evaluate(
        model,
        pipeline,
        test_items,
        config.evaluation,
        wave_backbone=optional_backbone(wave_backbone),
        spec_backbone=optional_backbone(spec_backbone),
        stft_params=config.stft,
        jobs=jobs_for(ctx, jobs),
        run_info={"corpus_sha256": corpus.spec.config_hash(), "seed": config.seed},
    )
    csv_path, json_path = report.write(out_dir)
    speed = measure_inference(model, pipeline, test_items, config.evaluation)
    timing = {resolve_pipeline(pipeline): speed.as_dict()} if speed else {}
    (out_dir / "timing.json").write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    aggregate = report.aggregate()
    for row, values in aggregate.items():
        print_info(f"{row:16} ml1={values['ml1']:.5f} ssim={values['ssim']:.4f}")
    print_success(f"report: {csv_path}, {json_path}")
    log_run_shutdown(logger, "inpaintctl evaluate")


@cli.command("ablate")
@click.option("--corpus", "corpus_dir", type=click.Path(path_type=Path, file_okay=False), help="Corpus directory")
@click.option("--spec-backbone", type=click.Path(path_type=Path, dir_okay=False), help="Spectrogram backbone checkpoint")
@experiment_options()
@click.pass_context
@exit_on_error(logger)
def ablate_cmd(ctx, corpus_dir, spec_backbone, config_path, overrides, seed, out_dir, jobs):
    """Mask length x receptive field ablation; writes ablation.csv."""
    config = resolve(config_path, overrides, {"seed": seed})
    start_run("ablate", config, out_dir)
    corpus = load_or_generate_corpus(corpus_dir, config)
    table = ablate(
        [item.clip for item in corpus.split("train")],
        corpus.split("test"),
        config.ablation,
        config.detector,
        config.stft,
        config.seed,
        spec_backbone=optional_backbone(spec_backbone),
        jobs=jobs_for(ctx, jobs),
    )
    path = table.write(out_dir)
    for cell in table.cells:
        status = "PASS" if cell.success else "FAIL"
        print_info(f"mask {cell.mask_seconds:.2f}s ({cell.mask_frames:3d} frames)  RF {cell.receptive_field:3d}  {status}")
    thresholds = table.thresholds()
    print_info(f"receptive-field thresholds: {thresholds}")
    if not table.is_step_pattern():
        print_warning("ablation grid does not show a clean fail-then-succeed pattern")
    print_success(f"ablation table: {path}")
    log_run_shutdown(logger, "inpaintctl ablate")


@cli.command("benchmark")
@experiment_options()
@click.pass_context
@exit_on_error(logger)
def benchmark_cmd(ctx, config_path, overrides, seed, out_dir, jobs):
    """Full run: corpus, backbones, both pipelines trained and evaluated."""
    config = resolve(config_path, overrides, {"seed": seed})
    start_run("benchmark", config, out_dir)
    summary = run_benchmark(config, out_dir, jobs_for(ctx, jobs))
    for pipeline, rows in summary.items():
        for row, values in rows.items():
            print_info(f"{pipeline:12} {row:16} ml1={values['ml1']:.5f} ssim={values['ssim']:.4f}")
    print_success(f"benchmark written to {out_dir}")
    log_run_shutdown(logger, "inpaintctl benchmark")


@cli.command("show-config")
@click.option("--config", "config_path", type=click.Path(path_type=Path, dir_okay=False), help="Experiment config JSON file")
@click.option("--set", "overrides", multiple=True, metavar="SECTION.KEY=VALUE", help="Override one config value")
@click.option("--seed", type=int, default=None, help="Root seed")
@exit_on_error(logger)
def show_config(config_path, overrides, seed):
    """Print the resolved experiment configuration as JSON."""
    config = resolve(config_path, overrides, {"seed": seed})
    click.echo(json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True))


def main():
    """Entry point for inpaintctl"""
    try:
        cli()
    except KeyboardInterrupt:
        click.echo("\n")
        print_warning("Operation cancelled by user")
        sys.exit(130)
    except InpaintingError as e:
        print_error(e.message)
        sys.exit(e.exit_code)
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        print_error(f"Unexpected error: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
