"""Pinned normal generator shared by encoder and decoder.

splitmix64 expands the 64-bit seed into xoshiro256** state; normals come
from Box-Muller on 53-bit uniforms in (0, 1]. The algorithm id travels in
the stream header.
"""

from __future__ import annotations

import math

import numpy as np

RNG_ID = 1
MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256StarStar:
    def __init__(self, seed: int):
        state = int(seed) & MASK64
        s = []
        for _ in range(4):
            state, z = splitmix64(state)
            s.append(z)
        self.s = s

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def uniform(self) -> float:
        """Uniform on (0, 1] with 53 random bits."""
        return ((self.next_u64() >> 11) + 1) * 2.0**-53

    def normals(self, n: int) -> np.ndarray:
        out = np.empty(n, dtype=np.float64)
        two_pi = 2.0 * math.pi
        i = 0
        while i < n:
            r = math.sqrt(-2.0 * math.log(self.uniform()))
            theta = two_pi * self.uniform()
            out[i] = r * math.cos(theta)
            if i + 1 < n:
                out[i + 1] = r * math.sin(theta)
            i += 2
        return out


def init_xT(seed: int, shape) -> np.ndarray:
    """Standard-normal starting point x_T, identical for identical (seed, shape)."""
    shape = tuple(int(d) for d in shape)
    n = int(np.prod(shape)) if shape else 1
    return Xoshiro256StarStar(seed).normals(n).reshape(shape)
