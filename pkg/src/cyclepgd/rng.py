"""Seeded 64-bit PRNG with uniform and Gaussian sampling.

Everything that needs randomness in this package (projection keys, random
restarts, synthetic data, weight init) draws from SplitMix64 so that a seed
pins the exact byte-level output stream on a given build. Gaussians come
from Box-Muller on top of the uniform stream; no platform RNG is involved.
"""

from __future__ import annotations

import math

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    """Counter-style 64-bit generator (Steele et al.'s splitmix64 mixer)."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64
        self._gauss_spare: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform double in [0, 1), 53 bits of precision."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def normal(self) -> float:
        """Standard normal via Box-Muller; pairs are cached deterministically."""
        if self._gauss_spare is not None:
            z = self._gauss_spare
            self._gauss_spare = None
            return z
        u1 = self.uniform()
        while u1 == 0.0:  # log(0) guard; probability 2^-53 per draw
            u1 = self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._gauss_spare = r * math.sin(theta)
        return r * math.cos(theta)

    def normals(self, n: int) -> list[float]:
        return [self.normal() for _ in range(n)]

    def uniforms(self, n: int) -> list[float]:
        return [self.uniform() for _ in range(n)]


def derive_seed(base_seed: int, index: int) -> int:
    """Per-item seed: XOR keeps streams distinct and order-independent."""
    return (base_seed ^ index) & _MASK64
