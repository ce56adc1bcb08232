"""
RIS Link Simulator - Random Streams
Seeded, splittable random streams so that Monte Carlo work can be scheduled
in any order (or in parallel) and still reproduce bit for bit.
"""

import zlib
from typing import Union

import numpy as np

Key = Union[int, float, str]


def _key_to_int(key: Key) -> int:
    if isinstance(key, (int, np.integer)) and key >= 0:
        return int(key)
    return zlib.crc32(repr(key).encode("utf-8"))


def derive_stream(seed: int, *keys: Key) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``.

    Keys name the unit of work (method, SNR point, batch index ...). Floats,
    strings and negative ints are hashed, so the same key always maps to the
    same sub-stream regardless of what else is in the sweep.
    """
    spawn_key = tuple(_key_to_int(k) for k in keys)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=spawn_key)))


def spawn_streams(rng: np.random.Generator, count: int) -> list:
    """``count`` child generators of ``rng`` (one per parallel task)."""
    return rng.spawn(count)
