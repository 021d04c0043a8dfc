"""Pure-Python/numpy kernel implementations.

Same contracts as the compiled extension in _kernels.pyx; this module is the
fallback selected when the extension is missing. Both backends must agree on
tie-breaking: every ordering is by (distance, id) ascending.
"""

from __future__ import annotations

import heapq

import numpy as np

_CHUNK = 8192


def minhash_signature(hashes: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-function minima of (a*x + b) mod 2^64 over the cell hashes x."""
    m = a.shape[0]
    sig = np.full(m, np.iinfo(np.uint64).max, dtype=np.uint64)
    with np.errstate(over="ignore"):
        for lo in range(0, hashes.shape[0], _CHUNK):
            block = hashes[lo:lo + _CHUNK, None] * a[None, :] + b[None, :]
            np.minimum(sig, block.min(axis=0), out=sig)
    return sig


def count_equal(s1: np.ndarray, s2: np.ndarray) -> int:
    return int(np.count_nonzero(s1 == s2))


def sorted_overlap(a: np.ndarray, b: np.ndarray, ai: int = 0, bi: int = 0) -> int:
    """|a[ai:] ∩ b[bi:]| for strictly increasing int64 arrays."""
    return int(np.intersect1d(a[ai:], b[bi:], assume_unique=True).size)


def _dist(vecs: np.ndarray, idx, q64: np.ndarray) -> np.ndarray:
    diff = vecs[idx].astype(np.float64) - q64
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def search_layer(
    vecs: np.ndarray,
    adj: np.ndarray,
    deg: np.ndarray,
    entries: np.ndarray,
    q: np.ndarray,
    ef: int,
    visited: np.ndarray,
    stamp: int,
):
    """Beam search over one graph layer.

    Returns (ids int64, dists float64) of the ef closest reachable nodes,
    sorted ascending by (distance, id). `visited` is a reusable int32 scratch
    array marked with `stamp` (callers bump the stamp instead of clearing).
    """
    q64 = q.astype(np.float64)
    entry_ids = [int(e) for e in entries]
    dists = _dist(vecs, entry_ids, q64)

    candidates: list[tuple[float, int]] = []  # min-heap
    results: list[tuple[float, int]] = []     # max-heap via negated key
    for e, d in zip(entry_ids, dists):
        visited[e] = stamp
        heapq.heappush(candidates, (float(d), e))
        heapq.heappush(results, (-float(d), -e))

    while candidates:
        dc, c = heapq.heappop(candidates)
        worst_d, worst_id = -results[0][0], -results[0][1]
        if len(results) >= ef and (dc, c) > (worst_d, worst_id):
            break
        nbrs = [int(n) for n in adj[c, : deg[c]] if visited[n] != stamp]
        if not nbrs:
            continue
        for n in nbrs:
            visited[n] = stamp
        nd = _dist(vecs, nbrs, q64)
        for n, d in zip(nbrs, nd):
            d = float(d)
            worst_d, worst_id = -results[0][0], -results[0][1]
            if len(results) < ef or (d, n) < (worst_d, worst_id):
                heapq.heappush(candidates, (d, n))
                heapq.heappush(results, (-d, -n))
                if len(results) > ef:
                    heapq.heappop(results)

    out = sorted((-d, -i) for d, i in results)
    ids = np.array([i for _, i in out], dtype=np.int64)
    ds = np.array([d for d, _ in out], dtype=np.float64)
    return ids, ds


def select_neighbors(
    vecs: np.ndarray,
    cand_ids: np.ndarray,
    cand_dists: np.ndarray,
    m: int,
) -> np.ndarray:
    """Diversity-aware neighbor pick: keep candidates closer to the query than
    to any already-kept neighbor; fill leftover slots from the pruned ones.

    Candidates must already be sorted ascending by (distance, id).
    """
    n = cand_ids.shape[0]
    if n <= m:
        return cand_ids.astype(np.int64, copy=True)

    selected: list[int] = []
    discarded: list[int] = []
    for i in range(n):
        if len(selected) == m:
            break
        e = int(cand_ids[i])
        if not selected:
            selected.append(e)
            continue
        d_sel = _dist(vecs, selected, vecs[e].astype(np.float64)).min()
        if cand_dists[i] < d_sel:
            selected.append(e)
        else:
            discarded.append(e)
    for e in discarded:
        if len(selected) == m:
            break
        selected.append(e)
    return np.array(selected, dtype=np.int64)
