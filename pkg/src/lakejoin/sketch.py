"""MinHash sketching: the approximate equi-join baseline.

Each column gets a fixed-length signature of per-hash-function minima over
its cell hashes (64-bit multiply-shift functions, parameters derived from a
splitmix64 stream). Matching signature positions estimate Jaccard similarity
J; joinability is recovered through |Q ∩ X| = J(|Q|+|X|)/(1+J), which follows
from J = |∩| / (|Q|+|X|-|∩|) by inclusion-exclusion, then divided by |Q| and
clamped to [0, 1]. The index is a flat scan over sketches.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from lakejoin.corpus import Column, Repository
from lakejoin.errors import SketchCompatibilityError
from lakejoin.hashing import cell_hashes, splitmix64_array
from lakejoin.kernels import count_equal, minhash_signature
from lakejoin.oracle import SearchResult, _rank_topk

DEFAULT_M = 256


@dataclass(frozen=True)
class MinHashSketch:
    signature: np.ndarray  # uint64, length m
    set_size: int
    seed: int

    @property
    def m(self) -> int:
        return int(self.signature.shape[0])


def _hash_params(m: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    # odd multipliers a_i and offsets b_i for h_i(x) = a_i * x + b_i mod 2^64
    stream = splitmix64_array(seed, 2 * m)
    a = stream[:m] | np.uint64(1)
    b = stream[m:]
    return a, b


def minhash(col: Column | Iterable[str], m: int = DEFAULT_M, seed: int = 0) -> MinHashSketch:
    """Deterministic m-position MinHash signature of a column's cells."""
    if m < 1:
        raise ValueError("m must be >= 1")
    cells = col.cells if isinstance(col, Column) else tuple(col)
    a, b = _hash_params(m, seed)
    sig = minhash_signature(cell_hashes(cells, seed), a, b)
    return MinHashSketch(signature=sig, set_size=len(cells), seed=seed)


def estimate_jaccard(sq: MinHashSketch, sx: MinHashSketch) -> float:
    if sq.m != sx.m or sq.seed != sx.seed:
        raise SketchCompatibilityError(
            f"incompatible sketches: m={sq.m}/{sx.m}, seed={sq.seed}/{sx.seed}"
        )
    return count_equal(sq.signature, sx.signature) / sq.m


def estimate_joinability(sq: MinHashSketch, sx: MinHashSketch) -> float:
    """Estimated jn(Q, X) from two sketches (clamped to [0, 1])."""
    j = estimate_jaccard(sq, sx)
    if j == 0.0:
        return 0.0
    inter = j * (sq.set_size + sx.set_size) / (1.0 + j)
    return min(1.0, max(0.0, inter / sq.set_size))


class SketchIndex:
    """Flat MinHash index over a repository."""

    def __init__(self, repo: Repository, m: int = DEFAULT_M, seed: int = 0):
        self.m = m
        self.seed = seed
        self._ids = sorted(repo.ids())
        self._sketches = {cid: minhash(repo[cid], m, seed) for cid in self._ids}

    def __len__(self) -> int:
        return len(self._ids)

    def sketch(self, cid: str) -> MinHashSketch:
        return self._sketches[cid]

    def topk(self, q: Column | MinHashSketch, k: int) -> SearchResult:
        if k < 1:
            raise ValueError("k must be >= 1")
        sq = q if isinstance(q, MinHashSketch) else minhash(q, self.m, self.seed)
        scores = {cid: estimate_joinability(sq, sx)
                  for cid, sx in self._sketches.items()}
        return _rank_topk(scores, self._ids, k)


def sketch_topk(q: Column, index: SketchIndex, k: int) -> SearchResult:
    """Rank every indexed column by estimated joinability; same tie-break rule
    as the exact oracle (score desc, id asc)."""
    return index.topk(q, k)
