"""Small deterministic PRNG used for option permutations and sampling.

SplitMix64 is used instead of ``random.Random`` so that seeded permutations
and draws are reproducible bit-for-bit across interpreter versions and across
reimplementations in other languages. The algorithm is the public-domain
generator from Steele et al.'s SplittableRandom.
"""

from __future__ import annotations

from typing import Sequence, TypeVar

_MASK = (1 << 64) - 1

T = TypeVar("T")


class SplitMix64:
    """64-bit SplitMix64 stream seeded from an arbitrary Python int."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) via rejection sampling (unbiased)."""
        if n <= 0:
            raise ValueError("randbelow() requires n >= 1")
        limit = _MASK - (_MASK % n)
        while True:
            v = self.next_u64()
            if v < limit or n & (n - 1) == 0:
                return v % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, population: Sequence[T], k: int) -> list[T]:
        """k distinct elements drawn without replacement (partial Fisher-Yates)."""
        if k > len(population):
            raise ValueError(f"sample size {k} exceeds population {len(population)}")
        pool = list(population)
        out: list[T] = []
        for i in range(k):
            j = i + self.randbelow(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
            out.append(pool[i])
        return out


def permutation(n: int, seed: int) -> list[int]:
    """Permutation of range(n) for the given seed; seed 0 is the identity."""
    order = list(range(n))
    if seed != 0:
        SplitMix64(seed).shuffle(order)
    return order


def derive_seed(seed: int, stream: int) -> int:
    """Independent sub-seed for a named stream of a run-level seed."""
    return SplitMix64((seed & _MASK) ^ (0xA076_1D64_78BD_642F * (stream + 1))).next_u64()
