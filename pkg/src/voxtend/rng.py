"""Deterministic random draws for sampling and training.

Every stochastic operation takes an explicit SeedStream; identical seed
plus identical call sequence gives bit-identical results.  Child streams
are derived by hashing the parent seed with a tag tuple, never by
consuming the parent stream, so parallel and serial orchestrations of
the same work agree exactly.
"""

from __future__ import annotations

import hashlib

import numpy as np


class SeedStream:
    """Sequential source of random draws, fully determined by a 64-bit seed.

    A single stream must be consumed sequentially; concurrent users should
    each hold their own ``derive()``-d child.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.default_rng(self.seed)

    def normal(self, shape) -> np.ndarray:
        """i.i.d. standard-normal float64 draws of the given shape."""
        return self._gen.standard_normal(shape)

    def integers(self, low: int, high: int, size=None):
        """Uniform integers in [low, high)."""
        return self._gen.integers(low, high, size=size)

    def random(self, size=None):
        """Uniform float64 draws in [0, 1)."""
        return self._gen.random(size)

    def derive(self, *tags) -> "SeedStream":
        """Child stream keyed by (seed, tags).  Does not advance this stream."""
        digest = hashlib.sha256(repr((self.seed,) + tags).encode("utf-8")).digest()
        return SeedStream(int.from_bytes(digest[:8], "big"))

    def __repr__(self) -> str:
        return f"SeedStream({self.seed})"
