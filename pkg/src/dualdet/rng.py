"""Deterministic random numbers.

Everything in the project draws from PCG64 generators seeded through
``numpy.random.SeedSequence``, so a single 64-bit seed fully determines
datasets, parameter initialization, and training order. ``spawn`` derives
independent child streams (per image, per retry) without coupling them to
consumption order elsewhere.
"""
from __future__ import annotations

import numpy as np


class Rng:
    """PCG64-backed generator with hierarchical spawning."""

    def __init__(self, seed: int | np.random.SeedSequence):
        if isinstance(seed, np.random.SeedSequence):
            self.seq = seed
        else:
            self.seq = np.random.SeedSequence(int(seed))
        self.gen = np.random.Generator(np.random.PCG64(self.seq))

    def spawn(self, n: int) -> list["Rng"]:
        return [Rng(s) for s in self.seq.spawn(n)]

    def uniform(self, lo: float, hi: float, shape=()) -> np.ndarray:
        return self.gen.uniform(lo, hi, size=shape)

    def integers(self, lo: int, hi: int, shape=()) -> np.ndarray:
        return self.gen.integers(lo, hi, size=shape)

    def normal(self, shape=(), scale: float = 1.0) -> np.ndarray:
        return self.gen.normal(0.0, scale, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)
