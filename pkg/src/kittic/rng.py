"""Counter-based random numbers keyed by (seed, entity index, draw slot).

Each value is a pure function of its key, so results do not depend on how a
cloud is sliced, on traversal order, or on the number of workers.  The
mixer is SplitMix64 (Steele, Lea & Flood 2014), applied as a hash.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(*words: int) -> int:
    """Fold integers into one 64-bit value with the SplitMix64 finalizer.

    ``mix64(global_seed, frame_index)`` is the per-frame seed derivation
    used by the CLI.
    """
    h = 0
    for w in words:
        h = _splitmix_scalar((h ^ (int(w) & MASK64)) + _GOLDEN)
    return h


def _splitmix_scalar(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _splitmix(z: np.ndarray) -> np.ndarray:
    # uint64 array arithmetic wraps modulo 2**64 without warnings
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def hash_u64(seed: int, index, slot: int = 0) -> np.ndarray:
    """64-bit hash of (seed, index, slot); ``index`` may be an array."""
    idx = np.asarray(index, dtype=np.uint64)
    shape = idx.shape
    idx = idx.reshape(-1)  # 0-d operands would become scalars that warn on wrap
    base = np.full(1, mix64(seed, slot), dtype=np.uint64)
    z = _splitmix(idx * np.uint64(_GOLDEN) + base)
    return _splitmix(z ^ base).reshape(shape)


def uniform(seed: int, index, slot: int = 0, low: float = 0.0, high: float = 1.0) -> np.ndarray:
    """Uniform float64 in [low, high) keyed by (seed, index, slot)."""
    bits = hash_u64(seed, index, slot) >> np.uint64(11)
    u = bits.astype(np.float64) * (1.0 / 9007199254740992.0)
    return low + (high - low) * u


def normal(seed: int, index, slot: int = 0) -> np.ndarray:
    """Standard normal via Box-Muller; consumes slots ``slot`` and ``slot + 1``."""
    u1 = 1.0 - uniform(seed, index, slot)  # (0, 1], keeps log finite
    u2 = uniform(seed, index, slot + 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def integers(seed: int, index, slot: int, low: int, high: int) -> np.ndarray:
    """Integers in [low, high) keyed by (seed, index, slot)."""
    u = uniform(seed, index, slot)
    return (low + np.floor(u * (high - low))).astype(np.int64)
