"""Seeded, stream-splittable randomness.

Philox is counter-based, so (seed, stream) pairs give identical draws on
every platform and distinct streams are independent.
"""

from dataclasses import dataclass

import numpy as np

_MIX = 0x9E3779B97F4A7C15  # 64-bit golden-ratio multiplier


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(key=np.array([seed, stream], dtype=np.uint64))
    )


@dataclass(frozen=True)
class Rng:
    """A (seed, stream) handle; identical handles draw identically everywhere."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        return make_rng(self.seed, self.stream)

    def split(self, index: int) -> "Rng":
        return Rng(self.seed, (self.stream * _MIX + index + 1) % (1 << 64))
