"""Reproducible random streams.

Every stochastic step draws from a Philox4x64-10 counter-based generator
whose 128-bit key is derived from ``(seed, purpose, replicate)`` through
numpy's ``SeedSequence``.  A replicate's stream therefore depends only on
those three values, never on scheduling order or thread count.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

RNG_ALGORITHM = "philox4x64-10/seedsequence(seed;crc32(purpose),replicate)"

FIELD = "field"
NOISE = "noise"


@dataclass(frozen=True)
class RngSpec:
    seed: int
    purpose: str = FIELD
    replicate: int = 0
    algorithm: str = RNG_ALGORITHM

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.replicate < 0:
            raise ValueError("replicate index must be non-negative")
        if self.algorithm != RNG_ALGORITHM:
            raise ValueError(f"unsupported RNG algorithm {self.algorithm!r}")

    def child(self, purpose: str, replicate: int | None = None) -> "RngSpec":
        return RngSpec(self.seed, purpose, self.replicate if replicate is None else replicate)

    def generator(self) -> np.random.Generator:
        tag = zlib.crc32(self.purpose.encode("utf-8"))
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(tag, self.replicate))
        key = ss.generate_state(2, dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def standard_normal(self, size) -> np.ndarray:
        return self.generator().standard_normal(size)
