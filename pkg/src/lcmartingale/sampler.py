"""Seedable, splittable random streams and inverse-CDF sampling.

Streams are Philox-4x64 (counter-based) generators keyed through
``numpy.random.SeedSequence(base_seed, spawn_key=(stream_id,))``.  Both the
key derivation and the Philox bit stream are specified by NumPy independently
of platform, so ``(base_seed, stream_id)`` pins every draw.
"""
from __future__ import annotations

import numpy as np

from .pwl import LogConcaveDensity, quantile

__all__ = ["GENERATOR", "RngStream", "derive_stream", "draw"]

GENERATOR = "numpy.random.Philox (4x64-10) via SeedSequence(base_seed, spawn_key=(stream_id,))"

_MASK64 = (1 << 64) - 1


class RngStream:
    """A deterministic random stream owned by a single chain."""

    def __init__(self, base_seed: int, stream_id: int):
        self.base_seed = int(base_seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        seq = np.random.SeedSequence(self.base_seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.Philox(seq))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def uniform(self, size=None):
        """Uniform doubles on [0, 1)."""
        return self._gen.random(size)

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def __getstate__(self):
        return {"base_seed": self.base_seed, "stream_id": self.stream_id,
                "state": self._gen.bit_generator.state}

    def __setstate__(self, state):
        self.__init__(state["base_seed"], state["stream_id"])
        self._gen.bit_generator.state = state["state"]

    def __repr__(self):
        return f"RngStream(base_seed={self.base_seed}, stream_id={self.stream_id})"


def derive_stream(base_seed: int, stream_id: int) -> RngStream:
    """Fresh stream for ``(base_seed, stream_id)``; pure in its arguments."""
    return RngStream(base_seed, stream_id)


def draw(f: LogConcaveDensity, rng: RngStream, size=None):
    """Sample from ``f`` by inverting its CDF at the stream's next uniform(s)."""
    return quantile(f, rng.uniform(size))
