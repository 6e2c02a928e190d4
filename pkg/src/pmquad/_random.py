"""Seeded random streams shared by all simulators.

Every replica of a campaign owns an independent counter-based stream keyed by
``(seed, stream name, replica index, cell index)`` so that any single replica
can be recomputed in isolation and aggregation order never changes results.
"""
from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1
_TWO53 = float(1 << 53)


def stream_key(name: str) -> int:
    """Stable 32-bit key for a stream name (``hash`` is salted per process)."""
    return zlib.crc32(name.encode("utf-8"))


def replica_rng(seed: int, replica: int, stream: str = "", cell: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence([seed & _MASK64, stream_key(stream), replica, cell])
    return np.random.Generator(np.random.Philox(ss))


def open_uniforms(rng: np.random.Generator, size) -> np.ndarray:
    """Uniform draws on the open interval (0, 1).

    Built from 53 random bits as ``(k + 1/2) / 2**53`` so neither endpoint can
    occur; split points and inverse-CDF transforms rely on this.
    """
    k = rng.integers(0, 1 << 53, size=size, dtype=np.int64)
    return (k + 0.5) / _TWO53


class UniformStream:
    """Scalar access to open uniforms, refilled in blocks.

    Hot loops call :meth:`next` millions of times; pulling Python floats from a
    pre-drawn list is several times faster than scalar ``rng.random()``.
    """

    __slots__ = ("_rng", "_block", "_buf", "_pos")

    def __init__(self, rng: np.random.Generator, block: int = 1024):
        self._rng = rng
        self._block = block
        self._buf: list[float] = []
        self._pos = 0

    def next(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = open_uniforms(self._rng, self._block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def take(self, k: int) -> list[float]:
        if self._pos + k > len(self._buf):
            rest = self._buf[self._pos:]
            self._buf = rest + open_uniforms(self._rng, max(self._block, k)).tolist()
            self._pos = 0
        out = self._buf[self._pos:self._pos + k]
        self._pos += k
        return out


def as_stream(rng) -> UniformStream:
    if isinstance(rng, UniformStream):
        return rng
    return UniformStream(rng)
