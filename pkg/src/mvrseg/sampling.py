"""Cross-language deterministic patient sampling.

Selections must be reproducible from the seed alone, independent of any
host-language RNG, so the generator is pinned: a 64-bit xorshift whose
state is initialised through one splitmix64 step. Sampling without
replacement is a partial Fisher-Yates shuffle over the sorted id list
using ``next() % remaining`` (the modulo bias is negligible at these
population sizes and is part of the pinned definition).
"""

from __future__ import annotations

from typing import Sequence

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> int:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class Xorshift64:
    """Marsaglia xorshift64 with splitmix64 seeding; never yields state 0."""

    def __init__(self, seed: int):
        self.state = splitmix64(seed & _MASK64)
        if self.state == 0:
            self.state = 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x = (x ^ (x << 13)) & _MASK64
        x ^= x >> 7
        x = (x ^ (x << 17)) & _MASK64
        self.state = x
        return x

    def next_below(self, n: int) -> int:
        if n < 1:
            raise ValueError("n must be >= 1")
        return self.next_u64() % n


def sample_without_replacement(ids: Sequence[str], k: int, seed: int) -> list[str]:
    """Draw k distinct ids, uniformly, deterministically in the seed.

    Ids are sorted first so the draw depends only on the set, not on the
    caller's ordering.
    """
    pool = sorted(ids)
    if k < 0 or k > len(pool):
        raise ValueError(f"cannot sample {k} from {len(pool)} ids")
    rng = Xorshift64(seed)
    for i in range(k):
        j = i + rng.next_below(len(pool) - i)
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k]
