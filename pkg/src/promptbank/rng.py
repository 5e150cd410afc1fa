"""Seeded, platform-stable pseudo-randomness for the pipeline.

Every stochastic step (category retention draws, neighbor sampling,
Gaussian perturbation) draws from a splitmix64 stream so that reruns
with the same seed produce byte-identical outputs. The generator is
counter-based: output k of a stream seeded with s is

    mix64(s + (k + 1) * 0x9E3779B97F4A7C15)  (mod 2**64)

which allows bulk draws to be vectorized with numpy while staying
bit-identical to one-at-a-time draws. Uniforms take the top 53 bits;
Gaussians come from the Box-Muller transform over consecutive uniform
pairs. All floating-point work happens in float64 via numpy so scalar
and vector paths share one code path.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1
_INV_2_53 = 1.0 / (1 << 53)


def mix64(value: int) -> int:
    """splitmix64 finalizer: a fixed 64-bit avalanche permutation."""
    z = value & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def fnv1a64(text: str) -> int:
    """FNV-1a hash of UTF-8 bytes; used to fold string labels into seeds."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def derive_seed(seed: int, label: str) -> int:
    """Deterministic per-entity sub-seed from a root seed and a label."""
    return mix64((seed & _MASK64) ^ fnv1a64(label))


class SplitMix64:
    """A counter-based splitmix64 stream."""

    def __init__(self, seed: int):
        self._seed = seed & _MASK64
        self._counter = 0

    def _raw(self, n: int) -> np.ndarray:
        # Vectorized mix of the next n counter values; uint64 wraps mod 2**64.
        start = self._counter
        self._counter += n
        idx = np.arange(start + 1, start + n + 1, dtype=np.uint64)
        z = np.uint64(self._seed) + idx * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))

    def next_u64(self) -> int:
        return int(self._raw(1)[0])

    def uniform(self) -> float:
        """One draw from Uniform[0, 1)."""
        return float(self.uniforms(1)[0])

    def uniforms(self, n: int) -> np.ndarray:
        return (self._raw(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def normals(self, n: int, sigma: float = 1.0) -> np.ndarray:
        """n i.i.d. Normal(0, sigma^2) draws via Box-Muller.

        Consumes 2 * ceil(n / 2) uniforms; for odd n the sine half of the
        final pair is discarded.
        """
        if n <= 0:
            return np.empty(0, dtype=np.float64)
        pairs = (n + 1) // 2
        u = self.uniforms(2 * pairs)
        u1 = u[0::2]
        u2 = u[1::2]
        radius = np.sqrt(-2.0 * np.log1p(-u1))  # 1 - u1 in (0, 1], log is finite
        angle = 2.0 * np.pi * u2
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return sigma * out[:n]

    def choice_index(self, n: int) -> int:
        """Uniform index in [0, n)."""
        if n <= 0:
            raise ValueError("choice over an empty range")
        return min(int(self.uniform() * n), n - 1)
