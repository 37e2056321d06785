"""Deterministic random-number streams.

A stream is addressed by (seed, stream index); derived substreams extend the
address with further indices.  Two runs with the same address produce
bit-identical draws, and distinct addresses are independent for PCG64's
practical purposes, so operations can run concurrently without sharing
generator state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["RngStream"]


@dataclass(frozen=True)
class RngStream:
    """Address of a deterministic substream of the master seed."""

    seed: int
    stream: int = 0
    _path: tuple = field(default=(), repr=False)

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream, *self._path))
        return np.random.Generator(np.random.PCG64(ss))

    def substream(self, index: int) -> "RngStream":
        """Derived stream; deterministic function of (seed, stream, index path)."""
        return RngStream(self.seed, self.stream, self._path + (index,))
