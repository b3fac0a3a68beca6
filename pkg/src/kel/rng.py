"""Deterministic random numbers from the splitmix64 generator.

Counter-based: output k depends only on (seed, k), so scalar and batch
draws from the same seed agree and runs are reproducible across
platforms.  All arithmetic is modulo 2**64.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = float(2.0 ** -53)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Stream of 64-bit words: word k is mix(seed + (k+1)*golden)."""

    def __init__(self, seed: int):
        self._seed = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
        self._count = 0

    @property
    def seed(self) -> int:
        return int(self._seed)

    def words(self, count: int) -> np.ndarray:
        """Next `count` raw 64-bit words as a uint64 array."""
        if count < 0:
            raise ValueError("count must be non-negative")
        idx = np.arange(self._count + 1, self._count + count + 1, dtype=np.uint64)
        self._count += count
        return _mix(self._seed + idx * _GOLDEN)

    def next_u64(self) -> int:
        return int(self.words(1)[0])

    def uniforms(self, count: int) -> np.ndarray:
        """Next `count` floats in [0, 1), 53 significant bits each."""
        return (self.words(count) >> np.uint64(11)).astype(np.float64) * _U53

    def bits(self, count: int) -> np.ndarray:
        """Next `count` fair bits (top bit of each word)."""
        return (self.words(count) >> np.uint64(63)).astype(np.int64)
