"""Counter-based random streams keyed by (seed, index).

Every path or sample block gets its own Philox key, so results do not depend
on how work is split between workers.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_INDEX_BITS = 48

# purposes keep unrelated consumers on disjoint keys
PURPOSE = {"path": 0, "exit": 1, "subordinator": 2, "family": 3, "mc_kernel": 4, "misc": 5}


def stream_key(seed: int, index: int, purpose: int = 0) -> np.ndarray:
    if index < 0 or index >= (1 << _INDEX_BITS):
        raise ValueError("stream index out of range")
    word = ((int(purpose) & 0xFFFF) << _INDEX_BITS) | int(index)
    return np.array([int(seed) & _MASK64, word], dtype=np.uint64)


def bit_generator(seed: int, index: int, purpose: int = 0) -> np.random.Philox:
    return np.random.Philox(key=stream_key(seed, index, purpose))


def generator(seed: int, index: int = 0, purpose: int = 0) -> np.random.Generator:
    return np.random.Generator(bit_generator(seed, index, purpose))


def bit_generators(seed: int, start: int, count: int, purpose: int = 0):
    return [bit_generator(seed, start + i, purpose) for i in range(count)]
