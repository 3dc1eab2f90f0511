"""Seeded random streams.

All randomness in the package goes through numpy's PCG64 generator so that a
(seed, call sequence) pair fully determines every output.
"""

from __future__ import annotations

import zlib

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def child_rng(seed: int, *tags: str | int) -> np.random.Generator:
    """Independent stream keyed by ``seed`` and a path of tags."""
    words = [seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF]
    for tag in tags:
        words.append(zlib.crc32(str(tag).encode()))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))
