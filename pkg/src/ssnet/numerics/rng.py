"""Deterministic labeled random streams.

Every stochastic consumer in the pipeline (dataset sampling, masking,
weight init, dropout, noise injection) pulls from its own stream, keyed
by a 64-bit seed plus a text label. Streams are backed by the Philox
counter-based generator, so the draw sequence for a given (seed, label)
is identical on every platform and never shifts when another consumer
changes how much randomness it uses.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["RngStream"]


def _philox_key(seed: int, label: str) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return np.frombuffer(digest[:16], dtype=np.uint64)  # 128-bit Philox key


class RngStream:
    """A named, replayable random stream.

    Identical (seed, label) pairs produce bit-identical draw sequences.
    `derive` builds a child stream whose label extends the parent's, so
    per-sample or per-epoch streams never overlap.
    """

    def __init__(self, seed: int, label: str):
        self.seed = int(seed)
        self.label = str(label)
        self.draws = 0
        self._gen = np.random.Generator(np.random.Philox(key=_philox_key(self.seed, self.label)))

    def derive(self, *parts) -> "RngStream":
        """Child stream labeled `<label>/<part>/<part>...`."""
        suffix = "/".join(str(p) for p in parts)
        return RngStream(self.seed, f"{self.label}/{suffix}")

    def normal(self, shape) -> np.ndarray:
        self.draws += int(np.prod(shape, dtype=np.int64)) if shape else 1
        return self._gen.standard_normal(size=shape, dtype=np.float64)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        self.draws += int(np.prod(shape, dtype=np.int64)) if shape else 1
        return self._gen.uniform(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        self.draws += int(n)
        return self._gen.permutation(n)

    def bernoulli(self, p: float, shape) -> np.ndarray:
        """Boolean array, True with probability p."""
        self.draws += int(np.prod(shape, dtype=np.int64)) if shape else 1
        return self._gen.random(size=shape) < p

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, label={self.label!r}, draws={self.draws})"
