"""Deterministic randomness: SplitMix64 stream plus Fisher-Yates shuffling.

Every random decision in the package flows through one of these helpers so
that a single recorded 64-bit seed reproduces a run byte for byte, in any
implementation language.
"""
from __future__ import annotations

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """The SplitMix64 generator (Steele, Lea, Flood 2014)."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_below(self, bound: int) -> int:
        """Integer in [0, bound) by modulo reduction.

        The modulo bias is below 2**-40 for any bound this package uses;
        plain reduction keeps the stream trivially portable.
        """
        if bound < 1:
            raise ValueError("bound must be >= 1")
        return self.next_u64() % bound

    def next_unit(self) -> float:
        """Uniform float64 in [0, 1) using the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def derive(self) -> "SplitMix64":
        """A child stream seeded from the next output of this one."""
        return SplitMix64(self.next_u64())


def fisher_yates(n: int, rng: SplitMix64) -> list[int]:
    """Seeded Fisher-Yates permutation of range(n)."""
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.next_below(i + 1)
        order[i], order[j] = order[j], order[i]
    return order
