"""Portable deterministic random number generator.

Seeding and sampling must reproduce bit-for-bit across platforms and
implementations, so everything random in this package (k-means++ seeding,
fixture generation) draws from the splitmix64 stream defined here instead
of a platform RNG.

Stream definition (64-bit unsigned arithmetic, wrapping):

    state  = (state + 0x9E3779B97F4A7C15) mod 2^64
    z = state
    z = (z XOR (z >> 30)) * 0xBF58476D1CE4E5B9  mod 2^64
    z = (z XOR (z >> 27)) * 0x94D049BB133111EB  mod 2^64
    output = z XOR (z >> 31)

Derived samples:
  * float64 in [0, 1):   (output >> 11) * 2^-53
  * float64 in (0, 1]:   ((output >> 11) + 1) * 2^-53
  * integer in [0, n):   floor(uniform * n)
  * standard normal:     Box-Muller on one (0,1] and one [0,1) draw;
                         the pair (r*cos, r*sin) is consumed in order.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV53 = 2.0 ** -53


class SplitMix64:
    """splitmix64 stream with uniform, bounded-int and Gaussian draws."""

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK64
        self._gauss_spare: float | None = None

    def next_uint64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """Uniform float64 in [0, 1)."""
        return (self.next_uint64() >> 11) * _INV53

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("bound must be positive")
        return int(self.next_float() * n)

    def next_gauss(self) -> float:
        """Standard normal via Box-Muller, pairs consumed in order."""
        if self._gauss_spare is not None:
            value, self._gauss_spare = self._gauss_spare, None
            return value
        u1 = ((self.next_uint64() >> 11) + 1) * _INV53  # (0, 1]
        u2 = self.next_float()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._gauss_spare = r * math.sin(theta)
        return r * math.cos(theta)

    def gauss_vector(self, n: int) -> np.ndarray:
        return np.array([self.next_gauss() for _ in range(n)], dtype=np.float64)
