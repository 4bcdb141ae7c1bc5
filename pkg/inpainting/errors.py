#!/usr/bin/env python3
"""
Error types and error-handling utilities for the inpainting toolkit.
Every failure maps to a CLI exit code: 2 = usage, 3 = data, 4 = numeric failure.
"""

import json
import logging
import sys
import warnings
from functools import wraps
from typing import Any, Callable, ParamSpec, TypeVar

P = ParamSpec("P")
R = TypeVar("R")

EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class InpaintingError(Exception):
    """Base error with an exit code and an optional fix suggestion."""

    exit_code = EXIT_UNEXPECTED
    error_type = "unexpected"

    def __init__(
        self,
        message: str,
        suggestion: str | None = None,
        context: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(message)
        self.message = message
        self.suggestion = suggestion
        self.context = context or {}

    def to_dict(self) -> dict[str, Any]:
        """Standardized error response."""
        response: dict[str, Any] = {
            "success": False,
            "error": self.message,
            "type": self.error_type,
        }
        if self.suggestion:
            response["suggestion"] = self.suggestion
        if self.context:
            response["context"] = self.context
        return response


class ConfigurationError(InpaintingError):
    """Raised when configuration or command usage is invalid."""

    exit_code = EXIT_USAGE
    error_type = "configuration"


class DataError(InpaintingError):
    """Raised for malformed inputs: audio files, checkpoints, masks, shapes."""

    exit_code = EXIT_DATA
    error_type = "data"


class ShapeMismatchError(DataError):
    error_type = "shape_mismatch"


class SpectrogramKindError(DataError):
    error_type = "spectrogram_kind"


class CheckpointError(DataError):
    error_type = "checkpoint"


class NumericalError(InpaintingError):
    """Raised when a computation produces non-finite values."""

    exit_code = EXIT_NUMERIC
    error_type = "numeric"


class TrainingDivergedError(NumericalError):
    """Non-finite training loss. Carries the last good checkpoint path."""

    error_type = "training_diverged"

    def __init__(self, message: str, step: int, checkpoint: str | None = None) -> None:
        super().__init__(
            message,
            suggestion="Lower the learning rate or resume from the last good checkpoint",
            context={"step": step, "last_good_checkpoint": checkpoint},
        )
        self.step = step
        self.checkpoint = checkpoint


class BackboneTrainingError(NumericalError):
    """Classifier backbone did not reach its accuracy floor."""

    error_type = "backbone_training"


class EmptyMaskWarning(UserWarning):
    """A masked metric was evaluated on an empty mask and defined as 0."""


def warn_empty_mask(metric: str) -> None:
    warnings.warn(f"{metric}: empty mask, value defined as 0", EmptyMaskWarning, stacklevel=3)


def safe_json_dumps(data: Any, indent: int = 2) -> str:
    """
    Safely convert data to JSON string with error handling.

    Args:
        data: Data to convert to JSON
        indent: JSON indentation

    Returns:
        JSON string or error message
    """
    try:
        return json.dumps(data, indent=indent, default=str)
    except (TypeError, ValueError) as e:
        return json.dumps(
            {
                "error": f"Failed to serialize data to JSON: {e}",
                "type": "serialization_error",
            },
            indent=indent,
        )


def exit_on_error(
    logger: logging.Logger | None = None,
) -> Callable[[Callable[P, R]], Callable[P, R]]:
    """
    Decorator for CLI commands: converts toolkit errors into exit codes.

    Args:
        logger: Optional logger instance

    Returns:
        Decorated function that exits with the error's code on failure
    """

    def decorator(func: Callable[P, R]) -> Callable[P, R]:
        @wraps(func)
        def wrapper(*args: P.args, **kwargs: P.kwargs) -> R:
            _logger = logger or logging.getLogger(func.__module__)

            try:
                return func(*args, **kwargs)

            except InpaintingError as e:
                _logger.error(f"{func.__name__} failed: {e.message}")
                print(safe_json_dumps(e.to_dict()), file=sys.stderr)
                sys.exit(e.exit_code)

            except FileNotFoundError as e:
                _logger.error(f"File not found in {func.__name__}: {e}")
                print(
                    safe_json_dumps(DataError(f"File not found: {e.filename}").to_dict()),
                    file=sys.stderr,
                )
                sys.exit(EXIT_DATA)

        return wrapper

    return decorator


def validate_non_empty(value: Any, field_name: str) -> None:
    """Validate that a value is not empty."""
    if value is None or (hasattr(value, "__len__") and len(value) == 0):
        raise ConfigurationError(f"{field_name} cannot be empty")


def validate_positive_int(value: int, field_name: str) -> None:
    """Validate that a value is a positive integer."""
    if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
        raise ConfigurationError(f"{field_name} must be a positive integer")
