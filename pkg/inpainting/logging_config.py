#!/usr/bin/env python3
"""
Logging for inpaintctl runs.

Every record carries the stage it was emitted from (``train[waveform]``,
``benchmark/ablate[0.15s]`` ...). Stages nest through ``log_stage`` and are
kept in a context variable, so worker threads started by
``harness.parallel_map`` report the stage of the caller.
"""
import logging
import sys
from contextlib import contextmanager
from contextvars import ContextVar
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Iterator

CONSOLE_FORMAT = "%(asctime)s | %(levelname)s | %(stage)s | %(module_path)s | %(message)s"
FILE_FORMAT = (
    "%(asctime)s | %(levelname)s | %(stage)s | %(module_path)s:%(funcName)s:%(lineno)d | %(message)s"
)
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
NO_STAGE = "-"

_stage: ContextVar[str] = ContextVar("inpainting_log_stage", default=NO_STAGE)


def current_stage() -> str:
    return _stage.get()


@contextmanager
def log_stage(label: str) -> Iterator[str]:
    """Nest ``label`` under the current stage for the duration of the block."""
    parent = _stage.get()
    stage = label if parent == NO_STAGE else f"{parent}/{label}"
    token = _stage.set(stage)
    try:
        yield stage
    finally:
        _stage.reset(token)


class StageFilter(logging.Filter):
    """Stamps the current stage and the package-relative module path on each record."""

    def __init__(self, package: str = "inpainting") -> None:
        super().__init__()
        self.prefix = package + "."

    def filter(self, record: logging.LogRecord) -> bool:
        record.stage = _stage.get()
        record.module_path = record.name.removeprefix(self.prefix)
        return True


class StageFormatter(logging.Formatter):
    """Fixed-width level names; with colors on, only the level name is colored."""

    LEVEL_COLORS = {
        logging.DEBUG: "\x1b[38;21m",
        logging.INFO: "\x1b[38;5;39m",
        logging.WARNING: "\x1b[38;5;226m",
        logging.ERROR: "\x1b[38;5;196m",
        logging.CRITICAL: "\x1b[31;1m",
    }
    RESET = "\x1b[0m"

    def __init__(self, fmt: str = CONSOLE_FORMAT, use_colors: bool = False) -> None:
        super().__init__(fmt, datefmt=DATE_FORMAT)
        self.use_colors = use_colors

    def format(self, record: logging.LogRecord) -> str:
        original = record.levelname
        level = f"{original:<8}"
        if self.use_colors and record.levelno in self.LEVEL_COLORS:
            level = f"{self.LEVEL_COLORS[record.levelno]}{level}{self.RESET}"
        # records without the filter (third-party handlers) still format
        for name, default in (("stage", NO_STAGE), ("module_path", record.name)):
            if not hasattr(record, name):
                setattr(record, name, default)
        record.levelname = level
        try:
            return super().format(record)
        finally:
            record.levelname = original


def setup_logging(
    logger_name: str = "inpainting",
    log_level: str = "INFO",
    log_file: Path | None = None,
    max_bytes: int = 10485760,  # 10 MB
    backup_count: int = 5,
    console_level: str = "INFO",
    use_colors: bool = False,
) -> logging.Logger:
    """
    Configure the package logger for one run.

    Console output goes to stderr so stdout stays clean for command output;
    ``log_file`` adds a rotating DEBUG log with call sites.
    """
    logger = logging.getLogger(logger_name)
    logger.setLevel(getattr(logging, log_level.upper(), logging.INFO))
    for handler in logger.handlers:
        handler.close()
    logger.handlers.clear()
    logger.propagate = False
    stage_filter = StageFilter(logger_name)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(getattr(logging, console_level.upper(), logging.INFO))
    console_handler.setFormatter(StageFormatter(CONSOLE_FORMAT, use_colors))
    console_handler.addFilter(stage_filter)
    logger.addHandler(console_handler)

    if log_file:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            log_file, maxBytes=max_bytes, backupCount=backup_count, encoding="utf-8"
        )
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(StageFormatter(FILE_FORMAT))
        file_handler.addFilter(stage_filter)
        logger.addHandler(file_handler)

    return logger


def _flatten(config: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in config.items():
        name = f"{prefix}.{key}" if prefix else str(key)
        if isinstance(value, dict):
            flat.update(_flatten(value, name))
        else:
            flat[name] = value
    return flat


def log_run_startup(logger: logging.Logger, run_name: str, config: dict[str, Any]) -> None:
    """Run banner, then one ``key: value`` line per resolved setting."""
    logger.info(f"{run_name} starting (Python {sys.version.split()[0]})")
    for key, value in _flatten(config).items():
        logger.debug(f"{key}: {value}")
    logger.info(f"seed {config.get('seed', NO_STAGE)}, {len(_flatten(config))} settings resolved")


def log_run_shutdown(logger: logging.Logger, run_name: str) -> None:
    logger.info(f"{run_name} finished")
