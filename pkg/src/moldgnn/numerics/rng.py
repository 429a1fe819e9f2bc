"""Seeded random streams.

Every stream is a numpy ``Generator`` over the PCG64 bit generator, whose
output sequence is fixed by the algorithm and identical on every platform.
Sub-streams are derived from the run seed plus string keys, so adding a new
consumer never perturbs existing ones.
"""

from __future__ import annotations

import zlib

import numpy as np

UINT64_MAX = 2**64 - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= UINT64_MAX:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def _key_word(key: str | int) -> int:
    if isinstance(key, int):
        return key
    return zlib.crc32(key.encode("utf-8"))


class Rng:
    """Deterministic random source for one run."""

    def __init__(self, seed: int, *keys: str | int):
        self.seed = check_seed(seed)
        self.keys = keys
        words = [self.seed & 0xFFFFFFFF, self.seed >> 32] + [_key_word(k) for k in keys]
        self.generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))

    def child(self, *keys: str | int) -> "Rng":
        return Rng(self.seed, *self.keys, *keys)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self.generator.uniform(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def normal(self, shape, scale: float = 1.0) -> np.ndarray:
        return self.generator.normal(0.0, scale, size=shape)

    @property
    def state(self) -> dict:
        return self.generator.bit_generator.state
