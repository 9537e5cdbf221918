"""Counter-based SplitMix64 generator with Box-Muller normals.

The generator seeded with ``s`` emits ``mix(s + (i + 1) * GOLDEN)`` as its
``i``-th 64-bit output, so any stream position can be computed directly.
That makes the scalar :class:`Prng` and the vectorised helpers below
produce identical values, and lets callers synthesise noise for a sub-region
of an image without generating the rest of the stream.

Uniforms use the top 53 bits: ``u = ((x >> 11) + 0.5) * 2**-53``, which
lies strictly inside (0, 1). Normals come in Box-Muller pairs drawn from
two consecutive uniforms ``(u1, u2)``::

    z0 = sqrt(-2 ln u1) * cos(2 pi u2)
    z1 = sqrt(-2 ln u1) * sin(2 pi u2)

Normal ``k`` of a stream is element ``k % 2`` of pair ``k // 2``.
"""

from __future__ import annotations

import numpy as np

ALGORITHM_ID = "splitmix64-boxmuller-v1"

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 2.0**-53


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def splitmix64(value: int) -> int:
    """First output of a SplitMix64 generator seeded with ``value``."""
    return mix64(value + GOLDEN)


def derive_seed(base: int, *keys: int) -> int:
    """Fold ``keys`` into ``base`` with ``s <- splitmix64(s ^ (GOLDEN * k))``.

    Used to split one user seed into independent per-task seeds, so
    results do not depend on the order tasks are scheduled in.
    """
    s = base & MASK64
    for k in keys:
        s = splitmix64(s ^ ((GOLDEN * k) & MASK64))
    return s


class Prng:
    """Scalar SplitMix64 stream. Each normal pair consumes two uniforms."""

    algorithm = ALGORITHM_ID

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self.state = self.seed
        self._cached: float | None = None

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def uniform(self) -> float:
        return ((self.next_u64() >> 11) + 0.5) * _INV53

    def below(self, n: int) -> int:
        """Integer in ``[0, n)`` (modulo reduction; bias < n / 2**64)."""
        if n < 1:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    def normal(self) -> float:
        if self._cached is not None:
            z, self._cached = self._cached, None
            return z
        u1 = self.uniform()
        u2 = self.uniform()
        z0, z1 = _box_muller(np.array([u1]), np.array([u2]))
        self._cached = float(z1[0])
        return float(z0[0])


def gaussian_sample(prng: Prng) -> float:
    return prng.normal()


def _box_muller(u1: np.ndarray, u2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # shared by the scalar and vector paths: libm and numpy's SIMD trig can
    # differ in the last ulp
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    return r * np.cos(theta), r * np.sin(theta)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def u64_at(seed: int, positions: np.ndarray) -> np.ndarray:
    """Stream outputs at zero-based ``positions`` (vectorised)."""
    pos = np.asarray(positions, dtype=np.uint64)
    with np.errstate(over="ignore"):
        state = np.uint64(seed & MASK64) + (pos + np.uint64(1)) * np.uint64(GOLDEN)
        return _mix_array(state)


def uniforms_at(seed: int, positions: np.ndarray) -> np.ndarray:
    bits = u64_at(seed, positions) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * _INV53


def normals_at(seed: int, indices: np.ndarray) -> np.ndarray:
    """Standard normals at stream indices ``indices`` (any shape).

    Matches ``Prng(seed).normal()`` called ``max(indices) + 1`` times.
    """
    idx = np.asarray(indices, dtype=np.int64)
    pair = idx // 2
    z0, z1 = _box_muller(uniforms_at(seed, 2 * pair), uniforms_at(seed, 2 * pair + 1))
    return np.where(idx % 2 == 0, z0, z1)


def normals(seed: int, count: int) -> np.ndarray:
    return normals_at(seed, np.arange(count, dtype=np.int64))
