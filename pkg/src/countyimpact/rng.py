"""SplitMix64, used wherever a sample must be reproducible across implementations.

State advances by the golden-ratio increment ``0x9E3779B97F4A7C15``; output is
mixed with multipliers ``0xBF58476D1CE4E5B9`` and ``0x94D049BB133111EB`` and
shifts 30, 27, 31 (Steele, Lea & Flood 2014). Bounded integers use rejection
sampling, and sampling without replacement is a partial Fisher-Yates shuffle.
"""

from __future__ import annotations

from typing import Sequence, TypeVar

T = TypeVar("T")

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * MIX1) & MASK64
        z = ((z ^ (z >> 27)) * MIX2) & MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = ((1 << 64) // n) * n
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def sample(self, items: Sequence[T], k: int) -> list[T]:
        """``k`` items without replacement, in draw order."""
        pool = list(items)
        if k > len(pool):
            raise ValueError("sample larger than population")
        for i in range(k):
            j = i + self.below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def shuffle(self, items: Sequence[T]) -> list[T]:
        return self.sample(items, len(items))
