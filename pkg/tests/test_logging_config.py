"""Tests for run logging: stage context, formatting and handlers."""

import logging

import pytest

from inpainting.harness import parallel_map
from inpainting.logging_config import (
    NO_STAGE,
    StageFilter,
    StageFormatter,
    current_stage,
    log_run_shutdown,
    log_run_startup,
    log_stage,
    setup_logging,
)


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    logging.getLogger("inpainting").handlers.clear()


def make_record(name: str = "inpainting.harness", level: int = logging.INFO) -> logging.LogRecord:
    return logging.LogRecord(name, level, __file__, 1, "step 3: loss 0.5", None, None)


class TestLogStage:
    def test_default(self):
        assert current_stage() == NO_STAGE

    def test_nesting(self):
        with log_stage("benchmark") as outer:
            assert outer == "benchmark"
            with log_stage("train[waveform]") as inner:
                assert inner == "benchmark/train[waveform]"
                assert current_stage() == inner
            assert current_stage() == "benchmark"
        assert current_stage() == NO_STAGE

    def test_reset_after_error(self):
        with pytest.raises(RuntimeError):
            with log_stage("train[spectrogram]"):
                raise RuntimeError("diverged")
        assert current_stage() == NO_STAGE

    def test_parallel_workers_inherit_stage(self):
        with log_stage("evaluate[waveform]"):
            stages = parallel_map(lambda _: current_stage(), list(range(6)), jobs=3)
        assert stages == ["evaluate[waveform]"] * 6

    def test_parallel_workers_do_not_leak(self):
        def nested(index: int) -> str:
            with log_stage(f"clip{index}"):
                return current_stage()

        with log_stage("ablate"):
            stages = parallel_map(nested, [0, 1, 2], jobs=2)
            assert current_stage() == "ablate"
        assert stages == ["ablate/clip0", "ablate/clip1", "ablate/clip2"]


class TestFormatting:
    def test_filter_stamps_stage_and_module(self):
        record = make_record()
        with log_stage("train[waveform]"):
            assert StageFilter().filter(record)
        assert record.stage == "train[waveform]"
        assert record.module_path == "harness"

    def test_foreign_logger_keeps_name(self):
        record = make_record(name="urllib3.connectionpool")
        StageFilter().filter(record)
        assert record.module_path == "urllib3.connectionpool"

    def test_unfiltered_record_still_formats(self):
        line = StageFormatter().format(make_record())
        assert f"| {NO_STAGE} | inpainting.harness | step 3: loss 0.5" in line

    def test_colors_only_on_level(self):
        record = make_record(level=logging.WARNING)
        StageFilter().filter(record)
        line = StageFormatter(use_colors=True).format(record)
        level_field = line.split(" | ")[1]
        assert level_field.startswith(StageFormatter.LEVEL_COLORS[logging.WARNING])
        assert level_field.endswith(StageFormatter.RESET)
        assert line.count("\x1b[") == 2
        assert record.levelname == "WARNING"

    def test_plain_level_is_padded(self):
        record = make_record()
        StageFilter().filter(record)
        assert " | INFO     | - | harness | " in StageFormatter().format(record)


class TestSetupLogging:
    def test_console_line_carries_stage(self, capsys):
        logger = setup_logging(log_level="INFO")
        with log_stage("train[spectrogram]"):
            logging.getLogger("inpainting.harness").info("step 10/400: loss 0.21000")
        captured = capsys.readouterr()
        assert captured.out == ""
        assert "| train[spectrogram] | harness | step 10/400: loss 0.21000" in captured.err
        assert "\x1b[" not in captured.err
        assert not logger.propagate

    def test_console_level(self, capsys):
        setup_logging(log_level="DEBUG", console_level="WARNING")
        logging.getLogger("inpainting.losses").info("held-out accuracy 0.950")
        assert capsys.readouterr().err == ""

    def test_file_log_has_call_site(self, tmp_path):
        log_file = tmp_path / "logs" / "run.log"
        setup_logging(log_level="DEBUG", log_file=log_file, console_level="ERROR")
        with log_stage("backbone[waveform]"):
            logging.getLogger("inpainting.losses").debug("step 1: loss 2.302585")
        for handler in logging.getLogger("inpainting").handlers:
            handler.flush()
        text = log_file.read_text(encoding="utf-8")
        assert "| backbone[waveform] | losses:test_file_log_has_call_site:" in text
        assert "step 1: loss 2.302585" in text

    def test_repeated_setup_replaces_handlers(self, tmp_path):
        setup_logging(log_file=tmp_path / "a.log")
        logger = setup_logging()
        assert len(logger.handlers) == 1


def test_run_banners(capsys):
    logger = setup_logging(log_level="DEBUG")
    config = {"seed": 7, "train": {"steps": 5, "lr": 0.001}, "corpus": {"name": "toy-sc"}}
    log_run_startup(logger, "train", config)
    log_run_shutdown(logger, "train")
    err = capsys.readouterr().err
    assert "train starting (Python" in err
    assert "train.steps: 5" in err
    assert "corpus.name: toy-sc" in err
    assert "seed 7, 4 settings resolved" in err
    assert err.rstrip().endswith("train finished")
