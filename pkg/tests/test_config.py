"""Tests for runtime settings and experiment configuration resolution."""

import json

import pytest

from inpainting.config import (
    RESOLVED_CONFIG_NAME,
    ExperimentConfig,
    RuntimeSettings,
    apply_overrides,
    load_env_file,
    load_experiment_config,
    validate_config,
    write_resolved_config,
)
from inpainting.errors import ConfigurationError


class TestRuntimeSettings:
    def test_defaults(self, monkeypatch):
        for name in ("INPAINTING_LOG_LEVEL", "INPAINTING_CONSOLE_LEVEL", "INPAINTING_LOG_DIR", "INPAINTING_JOBS"):
            monkeypatch.delenv(name, raising=False)
        settings = RuntimeSettings()
        assert settings.log_level == "INFO"
        assert settings.jobs == 1
        assert settings.validate() == (True, [])

    def test_environment(self, monkeypatch):
        monkeypatch.setenv("INPAINTING_LOG_LEVEL", "debug")
        monkeypatch.setenv("INPAINTING_JOBS", "4")
        settings = RuntimeSettings()
        assert settings.log_level == "DEBUG"
        assert settings.jobs == 4
        assert settings.to_dict()["jobs"] == 4

    def test_invalid_values(self):
        settings = RuntimeSettings(log_level="LOUD", jobs=0)
        is_valid, errors = settings.validate()
        assert not is_valid
        assert len(errors) == 2
        with pytest.raises(ConfigurationError):
            validate_config(settings)

    def test_env_file(self, tmp_path, monkeypatch):
        # set first so teardown restores the variable dotenv writes
        monkeypatch.setenv("INPAINTING_LOG_DIR", "unused")
        monkeypatch.delenv("INPAINTING_LOG_DIR")
        env = tmp_path / ".env"
        env.write_text("INPAINTING_LOG_DIR=/tmp/inpainting-logs\n")
        assert load_env_file(env)
        assert RuntimeSettings().log_dir == "/tmp/inpainting-logs"
        assert not load_env_file(tmp_path / "missing.env")


class TestOverrides:
    def test_values_parse_as_json(self):
        data = apply_overrides({}, ["train.steps=10", "train.dtype=float32", "ablation.mask_seconds=[0.1]"])
        assert data == {"train": {"steps": 10, "dtype": "float32"}, "ablation": {"mask_seconds": [0.1]}}

    def test_input_is_not_mutated(self):
        data = {"train": {"steps": 1}}
        apply_overrides(data, ["train.steps=2"])
        assert data == {"train": {"steps": 1}}

    @pytest.mark.parametrize("override", ["train.steps", "=3"])
    def test_malformed(self, override):
        with pytest.raises(ConfigurationError):
            apply_overrides({}, [override])

    def test_scalar_is_not_a_section(self):
        with pytest.raises(ConfigurationError):
            apply_overrides({"seed": 1}, ["seed.value=2"])


class TestExperimentConfig:
    def test_defaults_use_toy_sc(self):
        config = load_experiment_config()
        assert config.corpus.name == "toy-sc"
        assert config.corpus.class_count == 10
        assert config.evaluation.mask_start == 0.4
        assert config.loss.perceptual_weight == 0.1

    def test_preset_expansion(self):
        config = ExperimentConfig.model_validate({"corpus": {"preset": "toy-esc", "examples_per_class": 2}})
        assert config.corpus.name == "toy-esc"
        assert config.corpus.clip_seconds == 5.0
        assert config.corpus.examples_per_class == 2

    def test_precedence(self, tmp_path):
        path = tmp_path / "experiment.json"
        path.write_text(json.dumps({"seed": 1, "train": {"steps": 7, "lr": 0.5}}))
        config = load_experiment_config(path, ["seed=2", "train.steps=8"], {"seed": 3, "train.lr": None})
        assert config.seed == 3
        assert config.train.steps == 8
        assert config.train.lr == 0.5

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError):
            load_experiment_config(overrides=["train.stpes=3"])

    def test_unknown_preset(self):
        with pytest.raises(ConfigurationError):
            load_experiment_config(overrides=["corpus.preset=toy-audioset"])

    def test_bad_mask_interval(self):
        with pytest.raises(ConfigurationError):
            load_experiment_config(overrides=["evaluation.mask_start=0.6", "evaluation.mask_end=0.4"])

    def test_bad_files(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_experiment_config(tmp_path / "absent.json")
        broken = tmp_path / "broken.json"
        broken.write_text("{not json")
        with pytest.raises(ConfigurationError):
            load_experiment_config(broken)
        listing = tmp_path / "list.json"
        listing.write_text("[1, 2]")
        with pytest.raises(ConfigurationError):
            load_experiment_config(listing)

    def test_resolved_snapshot_reloads(self, tmp_path):
        config = load_experiment_config(overrides=["seed=9", "corpus.preset=toy-esc"])
        path = write_resolved_config(config, tmp_path, {"command": "train"})
        assert path.name == RESOLVED_CONFIG_NAME
        payload = json.loads(path.read_text())
        assert payload["run"] == {"command": "train"}
        payload.pop("run")
        assert ExperimentConfig.model_validate(payload) == config
