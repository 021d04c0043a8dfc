"""Deterministic 64-bit hashing shared by the sketch and embed modules.

Python's builtin hash() is salted per process, so every hash that feeds a
signature or an embedding goes through blake2b (stable across runs and
platforms) or splitmix64 (for deriving per-index hash-function parameters).
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def hash64(data: str | bytes, seed: int = 0) -> int:
    """Stable 64-bit hash of a string, keyed by seed."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    key = (seed & MASK64).to_bytes(8, "little")
    digest = hashlib.blake2b(data, digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (next_state, output)."""
    state = (state + _GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def splitmix64_array(seed: int, n: int) -> np.ndarray:
    """First n outputs of the splitmix64 stream seeded with `seed`, as uint64."""
    with np.errstate(over="ignore"):
        state = (np.uint64(seed) + np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GOLDEN))
        z = state
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def cell_hashes(cells, seed: int = 0) -> np.ndarray:
    """uint64 base hash per cell string; input order preserved."""
    return np.array([hash64(c, seed) for c in cells], dtype=np.uint64)
