"""Tests for the inpaintctl command line."""

import json
import logging

import numpy as np
import pytest
from click.testing import CliRunner
from scipy.io import wavfile

from inpainting import __version__
from inpainting.dsp import AudioClip
from inpainting.errors import EXIT_DATA, EXIT_USAGE
from inpainting.models import ConvNetwork, default_waveform_config, save_model
from inpainting.wavio import write_wav
from inpaintctl import cli

QUIET = ["--log-level", "ERROR"]
SMALL_CORPUS = ["--set", "corpus.examples_per_class=3", "--set", "corpus.clip_seconds=0.25"]
SHORT_MASK = ["--set", "evaluation.mask_start=0.1", "--set", "evaluation.mask_end=0.15"]


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    logging.getLogger("inpainting").handlers.clear()


@pytest.fixture
def input_wav(tmp_path, rng):
    return write_wav(tmp_path / "in.wav", AudioClip(rng.uniform(-0.5, 0.5, 4000), 16000))


@pytest.fixture
def tiny_checkpoint(tmp_path, tiny_waveform_config):
    return save_model(tmp_path / "tiny.ckpt", ConvNetwork.initialize(tiny_waveform_config, 0))


def test_version(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output


@pytest.mark.parametrize(
    "command",
    ["gen-corpus", "train-backbone", "train", "inpaint", "evaluate", "ablate", "benchmark", "show-config"],
)
def test_help(runner, command):
    result = runner.invoke(cli, [command, "--help"])
    assert result.exit_code == 0
    assert "Usage" in result.output


def test_show_config(runner):
    result = runner.invoke(cli, [*QUIET, "show-config", "--set", "train.steps=5", "--seed", "7"])
    assert result.exit_code == 0
    config = json.loads(result.output)
    assert config["train"]["steps"] == 5
    assert config["seed"] == 7
    assert config["corpus"]["name"] == "toy-sc"


def test_show_config_unknown_key(runner):
    result = runner.invoke(cli, [*QUIET, "show-config", "--set", "train.stpes=5"])
    assert result.exit_code == EXIT_USAGE


def test_invalid_runtime_settings(runner, monkeypatch):
    monkeypatch.setenv("INPAINTING_JOBS", "0")
    result = runner.invoke(cli, ["show-config"])
    assert result.exit_code == EXIT_USAGE


class TestGenCorpus:
    def test_rerun_gives_identical_manifest(self, runner, tmp_path):
        for name in ("a", "b"):
            result = runner.invoke(cli, [*QUIET, "gen-corpus", "--out", str(tmp_path / name), *SMALL_CORPUS])
            assert result.exit_code == 0, result.output
        first = (tmp_path / "a" / "manifest.json").read_bytes()
        assert first == (tmp_path / "b" / "manifest.json").read_bytes()
        assert len(json.loads(first)["clips"]) == 30
        assert (tmp_path / "a" / "resolved_config.json").is_file()

    def test_seed_flag_wins(self, runner, tmp_path):
        result = runner.invoke(
            cli,
            [*QUIET, "gen-corpus", "--out", str(tmp_path), "--seed", "5", "--set", "corpus.seed=2", *SMALL_CORPUS],
        )
        assert result.exit_code == 0, result.output
        resolved = json.loads((tmp_path / "resolved_config.json").read_text())
        assert resolved["corpus"]["seed"] == 5

    def test_invalid_preset(self, runner, tmp_path):
        result = runner.invoke(cli, ["gen-corpus", "--preset", "toy-unknown", "--out", str(tmp_path)])
        assert result.exit_code != 0


class TestInpaint:
    def test_mask_end_before_start(self, runner, tmp_path, input_wav, tiny_checkpoint):
        result = runner.invoke(
            cli,
            [*QUIET, "inpaint", "--in", str(input_wav), "--mask-start", "0.2", "--mask-end", "0.1",
             "--pipeline", "wave", "--ckpt", str(tiny_checkpoint), "--out", str(tmp_path / "out.wav")],
        )
        assert result.exit_code == EXIT_USAGE

    def test_missing_checkpoint(self, runner, tmp_path, input_wav):
        result = runner.invoke(
            cli,
            [*QUIET, "inpaint", "--in", str(input_wav), "--mask-start", "0.1", "--mask-end", "0.15",
             "--pipeline", "wave", "--ckpt", str(tmp_path / "absent.ckpt"), "--out", str(tmp_path / "out.wav")],
        )
        assert result.exit_code == EXIT_DATA

    def test_malformed_wav(self, runner, tmp_path, tiny_checkpoint):
        bad = tmp_path / "bad.wav"
        bad.write_bytes(b"RIFF but not really")
        result = runner.invoke(
            cli,
            [*QUIET, "inpaint", "--in", str(bad), "--mask-start", "0.1", "--mask-end", "0.15",
             "--pipeline", "wave", "--ckpt", str(tiny_checkpoint), "--out", str(tmp_path / "out.wav")],
        )
        assert result.exit_code == EXIT_DATA

    def test_clip_shorter_than_model(self, runner, tmp_path, rng):
        ckpt = save_model(tmp_path / "wave.ckpt", ConvNetwork.initialize(default_waveform_config(), 0))
        short = write_wav(tmp_path / "short.wav", AudioClip(rng.uniform(-0.5, 0.5, 1600), 16000))
        result = runner.invoke(
            cli,
            [*QUIET, "inpaint", "--in", str(short), "--mask-start", "0.04", "--mask-end", "0.06",
             "--pipeline", "wave", "--ckpt", str(ckpt), "--out", str(tmp_path / "out.wav")],
        )
        assert result.exit_code == EXIT_DATA
        assert not (tmp_path / "out.wav").exists()

    def test_fills_only_the_gap(self, runner, tmp_path, input_wav, tiny_checkpoint):
        out = tmp_path / "out" / "filled.wav"
        result = runner.invoke(
            cli,
            [*QUIET, "inpaint", "--in", str(input_wav), "--mask-start", "0.1", "--mask-end", "0.15",
             "--pipeline", "wave", "--ckpt", str(tiny_checkpoint), "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        _, before = wavfile.read(input_wav)
        rate, after = wavfile.read(out)
        assert rate == 16000
        assert after.shape == before.shape
        assert np.array_equal(after[:1600], before[:1600])
        assert np.array_equal(after[2400:], before[2400:])
        resolved = json.loads((out.parent / "resolved_config.json").read_text())
        assert resolved["run"]["mask"] == [1600, 2400]


def test_train_then_evaluate(runner, tmp_path, tiny_waveform_config):
    corpus = tmp_path / "corpus"
    arch = tmp_path / "arch.json"
    arch.write_text(tiny_waveform_config.model_dump_json())
    assert runner.invoke(cli, [*QUIET, "gen-corpus", "--out", str(corpus), *SMALL_CORPUS]).exit_code == 0

    result = runner.invoke(
        cli,
        [*QUIET, "train", "--corpus", str(corpus), "--pipeline", "wave", "--arch", str(arch),
         "--out", str(tmp_path / "run"), "--set", "train.steps=2", "--set", "train.batch_size=1",
         "--set", "train.mask_seconds=0.05", "--set", "loss.perceptual_weight=0", *SHORT_MASK],
    )
    assert result.exit_code == 0, result.output
    assert (tmp_path / "run" / "best.ckpt").is_file()

    result = runner.invoke(
        cli,
        [*QUIET, "evaluate", "--corpus", str(corpus), "--pipeline", "wave",
         "--ckpt", str(tmp_path / "run" / "best.ckpt"), "--out", str(tmp_path / "eval"),
         "--set", "evaluation.gl_iterations=1", *SHORT_MASK],
    )
    assert result.exit_code == 0, result.output
    summary = json.loads((tmp_path / "eval" / "summary.json").read_text())
    assert summary["clip_count"] == 10
    assert (tmp_path / "eval" / "metrics.csv").is_file()
    assert "waveform" in json.loads((tmp_path / "eval" / "timing.json").read_text())


def test_arch_domain_mismatch(runner, tmp_path, tiny_spectrogram_config):
    arch = tmp_path / "arch.json"
    arch.write_text(tiny_spectrogram_config.model_dump_json())
    result = runner.invoke(
        cli,
        [*QUIET, "train", "--pipeline", "wave", "--arch", str(arch), "--out", str(tmp_path / "run"), *SMALL_CORPUS],
    )
    assert result.exit_code == EXIT_USAGE
