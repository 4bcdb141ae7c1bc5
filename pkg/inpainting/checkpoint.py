"""
Weight checkpoint file.

Little-endian layout:
    magic      4 bytes  b"AINP"
    version    uint32   1
    count      uint32   number of tensors
    per tensor:
        name_len  uint32, name utf-8 bytes
        ndim      uint32, dims uint32 * ndim
        values    float64 * prod(dims), C order

Round trip is bit-exact.
"""

import hashlib
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from inpainting.errors import CheckpointError

MAGIC = b"AINP"
VERSION = 1


def encode_weights(weights: Mapping[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(weights))]
    for name, array in weights.items():
        values = np.ascontiguousarray(array, dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack(f"<I{values.ndim}I", values.ndim, *values.shape))
        chunks.append(values.tobytes(order="C"))
    return b"".join(chunks)


def decode_weights(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise CheckpointError("not a weight checkpoint (bad magic)")
    try:
        version, count = struct.unpack_from("<II", blob, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        offset = 12
        weights: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            shape = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            values = np.frombuffer(blob, dtype="<f8", count=size, offset=offset)
            offset += 8 * size
            weights[name] = values.reshape(shape).astype(np.float64)
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        raise CheckpointError(f"truncated or corrupt checkpoint: {e}") from e
    if offset != len(blob):
        raise CheckpointError(f"{len(blob) - offset} trailing bytes in checkpoint")
    return weights


def save_weights(path: str | Path, weights: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_weights(weights))
    return path


def load_weights(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}", suggestion="Check the --ckpt path")
    return decode_weights(path.read_bytes())


def weights_digest(weights: Mapping[str, np.ndarray]) -> str:
    """sha256 of the encoded weights; used to prove evaluation leaves them untouched."""
    return hashlib.sha256(encode_weights(weights)).hexdigest()
