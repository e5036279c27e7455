"""Deterministic 64-bit PRNG used for splits, assignment plans, and search.

SplitMix64 (Vigna's mixer, as used by Java's SplittableRandom) is tiny and
fully pinned, so seeded runs stay byte-identical across platforms and
interpreter versions. The stdlib Mersenne Twister does not guarantee a
stable shuffle stream across Python releases, which would silently break
split reproducibility.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n), bias-free via rejection sampling."""
        if n <= 0:
            raise ValueError("randrange requires n >= 1")
        span = ((_MASK64 + 1) // n) * n
        while True:
            r = self.next_u64()
            if r < span:
                return r % n

    def random(self) -> float:
        """Float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]

    def choice(self, seq):
        return seq[self.randrange(len(seq))]
