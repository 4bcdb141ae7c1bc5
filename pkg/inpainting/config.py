#!/usr/bin/env python3
"""
Configuration management.

Two layers:
    RuntimeSettings   process-level knobs from environment variables (.env aware)
    ExperimentConfig  JSON experiment files with `section.key=value` overrides

Precedence: CLI flag > --set override > config file > defaults.
"""

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from inpainting.dsp import StftParams
from inpainting.errors import ConfigurationError
from inpainting.harness import (
    AblationConfig,
    DetectorConfig,
    EvaluationConfig,
    TrainSchedule,
)
from inpainting.losses import BackboneSchedule, LossConfig
from inpainting.protocol import PRESETS, CorpusSpec, preset

RESOLVED_CONFIG_NAME = "resolved_config.json"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def load_env_file(env_path: Path | None = None) -> bool:
    """Load environment variables from a .env file; returns whether one was found."""
    from dotenv import load_dotenv

    if env_path is None:
        env_path = Path.cwd() / ".env"
    if env_path.exists():
        load_dotenv(env_path)
        return True
    return False


@dataclass
class RuntimeSettings:
    """Process-level settings; every field defaults from an INPAINTING_* variable."""

    log_level: str = field(default_factory=lambda: os.getenv("INPAINTING_LOG_LEVEL", "INFO"))
    console_level: str = field(
        default_factory=lambda: os.getenv("INPAINTING_CONSOLE_LEVEL", "INFO")
    )
    log_dir: str = field(default_factory=lambda: os.getenv("INPAINTING_LOG_DIR", "logs"))
    jobs: int = field(default_factory=lambda: int(os.getenv("INPAINTING_JOBS", "1")))

    def __post_init__(self) -> None:
        self.log_level = self.log_level.upper()
        self.console_level = self.console_level.upper()

    def validate(self) -> tuple[bool, list[str]]:
        """Returns (is_valid, errors)."""
        errors: list[str] = []
        for name in ("log_level", "console_level"):
            if getattr(self, name) not in LOG_LEVELS:
                errors.append(f"Invalid {name}: {getattr(self, name)}")
        if self.jobs < 1:
            errors.append(f"jobs must be >= 1, got {self.jobs}")
        if not self.log_dir:
            errors.append("Missing required field: log_dir")
        return len(errors) == 0, errors

    def to_dict(self) -> dict[str, Any]:
        return {key: value for key, value in self.__dict__.items() if not key.startswith("_")}


def validate_config(settings: RuntimeSettings, logger: Any = None) -> None:
    is_valid, errors = settings.validate()
    if not is_valid:
        error_msg = "Configuration validation failed:\n" + "\n".join(f"  - {e}" for e in errors)
        if logger:
            logger.error(error_msg)
        raise ConfigurationError(error_msg)


class ExperimentConfig(BaseModel):
    """Everything a benchmark, training or ablation run depends on."""

    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    corpus: CorpusSpec = Field(default_factory=lambda: preset("toy-sc"))
    stft: StftParams = Field(default_factory=StftParams)
    train: TrainSchedule = Field(default_factory=TrainSchedule)
    loss: LossConfig = Field(default_factory=LossConfig)
    backbone: BackboneSchedule = Field(default_factory=BackboneSchedule)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    ablation: AblationConfig = Field(default_factory=AblationConfig)
    detector: DetectorConfig = Field(default_factory=DetectorConfig)

    @model_validator(mode="before")
    @classmethod
    def _expand_preset(cls, data: Any) -> Any:
        # {"corpus": {"preset": "toy-esc", ...}} starts from the named preset; toy-sc by default
        if isinstance(data, dict) and isinstance(data.get("corpus"), dict):
            corpus = dict(data["corpus"])
            name = corpus.pop("preset", None)
            if name is None and "class_generators" not in corpus:
                name = "toy-sc"
            if name is not None:
                if name not in PRESETS:
                    raise ValueError(f"unknown corpus preset {name!r}; use one of {sorted(PRESETS)}")
                data = {**data, "corpus": {**PRESETS[name], **corpus}}
        return data


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: dict[str, Any], overrides: list[str] | tuple[str, ...]) -> dict[str, Any]:
    """Apply `a.b.c=value` overrides; values parse as JSON, falling back to strings."""
    result = json.loads(json.dumps(data))
    for override in overrides:
        key, sep, raw = override.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(
                f"invalid override {override!r}", suggestion="Use --set section.key=value"
            )
        parts = key.strip().split(".")
        node = result
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigurationError(f"override {override!r}: {part} is not a section")
            node = child
        node[parts[-1]] = _parse_value(raw)
    return result


def load_experiment_config(
    path: str | Path | None = None,
    overrides: list[str] | tuple[str, ...] = (),
    flags: dict[str, Any] | None = None,
) -> ExperimentConfig:
    """
    Resolve an experiment configuration.

    ``flags`` maps dotted keys to explicit CLI values (e.g. {"seed": 3}); None
    values are ignored so unset flags never shadow the file or overrides.
    """
    data: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"config file {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigurationError(f"config file {path} must hold a JSON object")

    data = apply_overrides(data, list(overrides))
    explicit = [f"{key}={json.dumps(value)}" for key, value in (flags or {}).items() if value is not None]
    data = apply_overrides(data, explicit)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(
            f"invalid experiment configuration: {e}",
            suggestion="Run `inpaintctl show-config` to see every key and its default",
        ) from e


def write_resolved_config(
    config: ExperimentConfig, out_dir: str | Path, extra: dict[str, Any] | None = None
) -> Path:
    """Snapshot the resolved configuration next to a run's outputs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = config.model_dump(mode="json")
    if extra:
        payload["run"] = extra
    path = out / RESOLVED_CONFIG_NAME
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
