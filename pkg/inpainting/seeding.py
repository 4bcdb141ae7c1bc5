"""Deterministic random streams derived from one root seed."""

import hashlib

import numpy as np


def _key_entropy(key: object) -> int:
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(root_seed: int, *keys: object) -> np.random.Generator:
    """
    Independent generator for one consumer of randomness.

    The stream depends only on the root seed and the consumer keys, so adding
    a new consumer never shifts the draws of existing ones.
    """
    entropy = [int(root_seed) & 0xFFFFFFFFFFFFFFFF] + [_key_entropy(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(root_seed: int, *keys: object) -> int:
    """Integer child seed, for consumers that store a seed rather than a generator."""
    return int(derive_rng(root_seed, *keys).integers(0, 2**31 - 1))
