"""Reproducible random streams.

Every public entry point takes an integer seed. Independent streams are
obtained by labelled splitting: a label (e.g. ``"sample"``) and an index
(e.g. the sample number) select a Philox key, so stream ``i`` never depends
on how many draws stream ``i - 1`` made. This is what makes batches
order-independent and parallelizable.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _label_word(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def base_key(seed: int, label: str) -> int:
    """64-bit key word for ``(seed, label)``, hashed through SeedSequence."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=(_label_word(label),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def stream(seed: int, label: str, index: int = 0) -> np.random.Generator:
    """Generator for stream ``index`` of family ``label`` under ``seed``."""
    key = [base_key(seed, label), int(index) & _MASK64]
    return np.random.Generator(np.random.Philox(key=key))


class StreamFamily:
    """Cached key for many streams of one ``(seed, label)`` family."""

    def __init__(self, seed: int, label: str):
        self.seed = int(seed)
        self.label = label
        self._key = base_key(seed, label)

    def __call__(self, index: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=[self._key, int(index) & _MASK64]))

    def child(self, label: str) -> "StreamFamily":
        return StreamFamily(self.seed, f"{self.label}/{label}")
