"""
WAV read/write: 16-bit signed PCM, mono, RIFF container.

Samples map to [-1, 1] by division by 32768; out-of-range values are clamped
on write.
"""

import io
import logging
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from inpainting.dsp import AudioClip
from inpainting.errors import DataError

logger = logging.getLogger(__name__)

PCM_SCALE = 32768.0


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    scaled = np.round(np.clip(samples, -1.0, 1.0) * PCM_SCALE)
    return np.clip(scaled, -32768, 32767).astype("<i2")


def read_wav(path: str | Path) -> AudioClip:
    """Read a mono 16-bit PCM WAV file."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"WAV file not found: {path}", suggestion="Check the --in path")
    try:
        sample_rate, data = wavfile.read(path)
    except (ValueError, OSError) as e:
        raise DataError(f"Malformed WAV file {path}: {e}") from e

    if data.ndim != 1:
        raise DataError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype != np.int16:
        raise DataError(f"{path}: expected 16-bit PCM, got {data.dtype}")
    if data.size == 0:
        raise DataError(f"{path}: WAV file holds no samples")

    logger.debug(f"Read {data.size} samples @ {sample_rate} Hz from {path}")
    return AudioClip(data.astype(np.float64) / PCM_SCALE, int(sample_rate))


def wav_bytes(clip: AudioClip) -> bytes:
    buffer = io.BytesIO()
    wavfile.write(buffer, clip.sample_rate, to_pcm16(clip.samples))
    return buffer.getvalue()


def write_wav(path: str | Path, clip: AudioClip) -> Path:
    """Write a clip as mono 16-bit PCM, clamping to [-1, 1]."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(wav_bytes(clip))
    logger.debug(f"Wrote {len(clip)} samples to {path}")
    return path
