"""SplitMix64, used as a counter-based generator.

Every random draw in the package comes from here so that other
implementations can reproduce the exact streams. The algorithm:

    GAMMA = 0x9E3779B97F4A7C15
    mix64(z):
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9   (mod 2**64)
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB   (mod 2**64)
        return z ^ (z >> 31)
    output(key, i) = mix64(key + (i + 1) * GAMMA)  (mod 2**64), i = 0, 1, ...

``output(key, 0..)`` is the classic sequential SplitMix64 stream seeded with
``key``. Child streams are keyed by ``derive(seed, i, j, ...)``, which folds
each index in as ``key = output(key, index)``. Uniform floats use the top 53
bits: ``(x >> 11) * 2**-53``.

Reference vectors (seed 0): 0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4,
0x06C45D188009454F.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def output(key: int, index: int) -> int:
    """The ``index``-th 64-bit output of the stream keyed by ``key``."""
    return mix64(key + (index + 1) * GAMMA)


def derive(seed: int, *path: int) -> int:
    """Key of the child stream reached from ``seed`` by ``path``."""
    key = seed & MASK64
    for index in path:
        if index < 0:
            raise ValueError("stream path indices must be non-negative")
        key = output(key, index)
    return key


class SplitMix64:
    """Sequential view of one stream.

    >>> hex(SplitMix64(0).next_u64())
    '0xe220a8397b1dcdaf'
    """

    __slots__ = ("key", "counter")

    def __init__(self, key: int, counter: int = 0) -> None:
        self.key = key & MASK64
        self.counter = counter

    def child(self, *path: int) -> SplitMix64:
        return SplitMix64(derive(self.key, *path))

    def next_u64(self) -> int:
        value = output(self.key, self.counter)
        self.counter += 1
        return value

    def random(self) -> float:
        """Uniform float in [0, 1)."""
        return (self.next_u64() >> 11) * _INV_2_53

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection on the low end."""
        if n <= 0:
            raise ValueError("n must be positive")
        threshold = ((1 << 64) - n) % n
        while True:
            x = self.next_u64()
            if x >= threshold:
                return x % n

    def bernoulli(self, p: float) -> bool:
        return self.random() < p


# -- vectorised paths; they must agree bit-for-bit with the scalar ones ------

_GAMMA_U = np.uint64(GAMMA)
_M1_U = np.uint64(_M1)
_M2_U = np.uint64(_M2)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1_U
        z = (z ^ (z >> _S27)) * _M2_U
    return z ^ (z >> _S31)


def outputs_array(keys: np.ndarray | int, counters: np.ndarray | Sequence[int]) -> np.ndarray:
    """``output(key, counter)`` with numpy broadcasting over keys and counters."""
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64_array(keys + (counters + np.uint64(1)) * _GAMMA_U)


def uniforms_array(keys: np.ndarray | int, counters: np.ndarray | Sequence[int]) -> np.ndarray:
    raw = outputs_array(keys, counters)
    return (raw >> _S11).astype(np.float64) * _INV_2_53


def derive_array(seed: int, indices: np.ndarray | Sequence[int]) -> np.ndarray:
    """``derive(seed, i)`` for every ``i`` in ``indices``."""
    return outputs_array(seed & MASK64, indices)
