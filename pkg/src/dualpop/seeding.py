"""Counter-based seed derivation for replica-parallel Monte Carlo.

Replica streams must be independent and insensitive to scheduling order, so
each replica seed is derived from (master seed, replica index) alone through
a splitmix64-style mixer rather than by jumping a shared stream.
"""
from __future__ import annotations

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(z: int) -> int:
    """One splitmix64 finalization round of a 64-bit integer."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def replica_seed(master_seed: int, index: int) -> int:
    """Seed for replica `index`, a pure function of (master_seed, index)."""
    if index < 0:
        raise ValueError(f"replica index must be >= 0, got {index}")
    return splitmix64((master_seed + (index + 1) * _GAMMA) & _MASK64)


def make_rng(master_seed: int, index: int = 0) -> np.random.Generator:
    """Independent PCG64 generator for one replica stream."""
    return np.random.Generator(np.random.PCG64(replica_seed(master_seed, index)))
