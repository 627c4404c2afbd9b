"""Seed derivation: every random call gets its own stream keyed by (master seed, tags)."""
from __future__ import annotations

import zlib

import numpy as np


def _tag_key(tag) -> int:
    if isinstance(tag, (int, np.integer)) and not isinstance(tag, bool) and tag >= 0:
        return int(tag)
    return zlib.crc32(str(tag).encode("utf-8"))


def seed_sequence(seed: int, *tags) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(_tag_key(t) for t in tags))


def stream(seed: int, *tags) -> np.random.Generator:
    """Independent generator for one (seed, tags) pair; order of creation does not matter."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *tags)))


def derive_seed(seed: int, *tags) -> int:
    """Child integer seed, for handing to functions that take a plain seed."""
    return int(seed_sequence(seed, *tags).generate_state(1, np.uint64)[0] >> np.uint64(1))
