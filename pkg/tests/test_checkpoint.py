"""Tests for the binary weight checkpoint format."""

import struct

import numpy as np
import pytest

from inpainting.checkpoint import (
    MAGIC,
    decode_weights,
    encode_weights,
    load_weights,
    save_weights,
    weights_digest,
)
from inpainting.errors import CheckpointError


@pytest.fixture
def weights(rng):
    return {
        "layer00.weight": rng.standard_normal((4, 2, 9)),
        "layer00.bias": np.zeros(4),
        "head.weight": np.array([[np.pi, -0.0], [1e-300, 1e300]]),
    }


def test_bit_exact_round_trip(tmp_path, weights):
    path = save_weights(tmp_path / "w.ckpt", weights)
    back = load_weights(path)
    assert list(back) == list(weights)
    for name, array in weights.items():
        assert back[name].shape == array.shape
        assert back[name].tobytes() == array.tobytes()


def test_header_layout(weights):
    blob = encode_weights(weights)
    assert blob[:4] == MAGIC
    assert struct.unpack_from("<II", blob, 4) == (1, 3)


def test_bad_magic(weights):
    blob = encode_weights(weights)
    with pytest.raises(CheckpointError, match="magic"):
        decode_weights(b"XXXX" + blob[4:])


def test_truncated_blob(weights):
    blob = encode_weights(weights)
    with pytest.raises(CheckpointError):
        decode_weights(blob[:-8])


def test_trailing_bytes(weights):
    with pytest.raises(CheckpointError, match="trailing"):
        decode_weights(encode_weights(weights) + b"\x00")


def test_unsupported_version(weights):
    blob = bytearray(encode_weights(weights))
    blob[4:8] = struct.pack("<I", 9)
    with pytest.raises(CheckpointError, match="version"):
        decode_weights(bytes(blob))


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_weights(tmp_path / "nope.ckpt")


def test_digest_tracks_values(weights):
    digest = weights_digest(weights)
    assert digest == weights_digest(dict(weights))
    changed = dict(weights, **{"layer00.bias": np.full(4, 1e-12)})
    assert weights_digest(changed) != digest
