"""HNSW approximate nearest-neighbor index over column embeddings.

A layered proximity graph: every node lives at layer 0, each higher layer
keeps an exponentially thinning subset (level ~ floor(-ln(U) * mL)). A query
greedily descends from the top-layer entry point, then runs a beam search of
width ef over the base layer. Search cost depends on graph degree and vector
dimension, never on the cell counts of the original columns.

Vectors are stored unit-normalized by default so Euclidean kNN realizes
descending-cosine ranking. Index structure is immutable after build; searches
from multiple threads are safe as long as each uses its own scratch buffer
(the index keeps one per instance and guards it with a lock).
"""

from __future__ import annotations

import json
import math
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from lakejoin.errors import DimensionMismatchError, DuplicateColumnError, RepositoryFormatError
from lakejoin.kernels import search_layer, select_neighbors

INDEX_MAGIC = b"LJH1"
INDEX_VERSION = 1


@dataclass(frozen=True)
class HnswParams:
    m: int = 16
    m0: int | None = None               # base-layer degree cap, default 2m
    ef_construction: int = 200
    ef_search: int = 200
    level_norm: float | None = None     # default 1/ln(m)
    seed: int = 0

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if self.ef_construction < self.m:
            raise ValueError("ef_construction must be >= m")

    @property
    def base_degree(self) -> int:
        return self.m0 if self.m0 is not None else 2 * self.m

    @property
    def ml(self) -> float:
        return self.level_norm if self.level_norm is not None else 1.0 / math.log(self.m)


class HnswIndex:
    def __init__(self, params: HnswParams, dim: int, normalized: bool = True):
        self.params = params
        self.dim = dim
        self.normalized = normalized
        self.ids: list[str] = []
        self.vectors = np.empty((0, dim), dtype=np.float32)
        self.levels = np.empty(0, dtype=np.int32)
        self.entry_point = -1
        self.max_level = -1
        self._adj: list[np.ndarray] = []   # per layer: (n, cap) int32
        self._deg: list[np.ndarray] = []   # per layer: (n,) int32
        self._visited = np.empty(0, dtype=np.int32)
        self._stamp = 0
        self._lock = threading.Lock()
        self.meta: dict = {}  # free-form: encoding config for CLI round-trips

    def __len__(self) -> int:
        return len(self.ids)

    def _cap(self, layer: int) -> int:
        return self.params.base_degree if layer == 0 else self.params.m

    def _next_stamp(self) -> int:
        self._stamp += 1
        if self._stamp == np.iinfo(np.int32).max:
            self._visited.fill(0)
            self._stamp = 1
        return self._stamp

    def _distances(self, node: int, others: np.ndarray) -> np.ndarray:
        diff = self.vectors[others].astype(np.float64) - self.vectors[node].astype(np.float64)
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))

    def _shrink(self, layer: int, node: int) -> None:
        """Re-select `node`'s neighbor list when it exceeds the degree cap."""
        cap = self._cap(layer)
        deg = int(self._deg[layer][node])
        if deg <= cap:
            return
        nbrs = self._adj[layer][node, :deg].astype(np.int64)
        dists = self._distances(node, nbrs)
        order = np.lexsort((nbrs, dists))
        kept = select_neighbors(self.vectors, nbrs[order], dists[order], cap)
        self._deg[layer][node] = kept.shape[0]
        self._adj[layer][node, : kept.shape[0]] = kept.astype(np.int32)

    def _insert(self, idx: int) -> None:
        level = int(self.levels[idx])
        q = self.vectors[idx]
        if self.entry_point < 0:
            self.entry_point = idx
            self.max_level = level
            return

        cur = np.array([self.entry_point], dtype=np.int64)
        for layer in range(self.max_level, level, -1):
            ids, _ = search_layer(self.vectors, self._adj[layer], self._deg[layer],
                                  cur, q, 1, self._visited, self._next_stamp())
            cur = ids[:1]

        for layer in range(min(level, self.max_level), -1, -1):
            ids, dists = search_layer(self.vectors, self._adj[layer], self._deg[layer],
                                      cur, q, self.params.ef_construction,
                                      self._visited, self._next_stamp())
            sel = select_neighbors(self.vectors, ids, dists, self.params.m)
            nsel = sel.shape[0]
            self._adj[layer][idx, :nsel] = sel.astype(np.int32)
            self._deg[layer][idx] = nsel
            cap = self._cap(layer)
            for nb in sel:
                nb = int(nb)
                d = int(self._deg[layer][nb])
                if d < self._adj[layer].shape[1]:
                    self._adj[layer][nb, d] = idx
                    self._deg[layer][nb] = d + 1
                else:  # already at physical capacity: re-select including idx
                    nbrs = np.append(self._adj[layer][nb, :d].astype(np.int64), idx)
                    dists_nb = self._distances(nb, nbrs)
                    order = np.lexsort((nbrs, dists_nb))
                    kept = select_neighbors(self.vectors, nbrs[order],
                                            dists_nb[order], cap)
                    self._deg[layer][nb] = kept.shape[0]
                    self._adj[layer][nb, : kept.shape[0]] = kept.astype(np.int32)
                if self._deg[layer][nb] > cap:
                    self._shrink(layer, nb)
            cur = ids

        if level > self.max_level:
            self.entry_point = idx
            self.max_level = level

    def knn(self, q: np.ndarray, k: int, ef_search: int | None = None) -> list[tuple[str, float]]:
        """At most k (id, Euclidean distance) pairs, ascending by distance,
        ties by ascending id. Approximate: recall depends on ef_search."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if len(self) == 0:
            return []
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (self.dim,):
            raise DimensionMismatchError(f"query dim {q.shape} vs index dim {self.dim}")
        if self.normalized:
            norm = np.linalg.norm(q)
            if norm == 0:
                raise ValueError("cannot search with a zero vector")
            q = q / norm
        q32 = np.ascontiguousarray(q, dtype=np.float32)
        ef = max(ef_search if ef_search is not None else self.params.ef_search, k)

        with self._lock:
            cur = np.array([self.entry_point], dtype=np.int64)
            for layer in range(self.max_level, 0, -1):
                ids, _ = search_layer(self.vectors, self._adj[layer], self._deg[layer],
                                      cur, q32, 1, self._visited, self._next_stamp())
                cur = ids[:1]
            ids, dists = search_layer(self.vectors, self._adj[0], self._deg[0],
                                      cur, q32, ef, self._visited, self._next_stamp())

        out = [(self.ids[int(i)], float(d)) for i, d in zip(ids[:k], dists[:k])]
        out.sort(key=lambda t: (t[1], t[0]))
        return out

    def degree_bounds_ok(self) -> bool:
        for layer in range(len(self._adj)):
            if int(self._deg[layer].max(initial=0)) > self._cap(layer):
                return False
        return True


def build(vectors: Sequence[tuple[str, np.ndarray]], params: HnswParams,
          normalize: bool = True) -> HnswIndex:
    """Build an index over (id, vector) pairs; deterministic for a fixed
    params.seed and input order."""
    if not vectors:
        return HnswIndex(params, dim=0, normalized=normalize)

    dim = int(np.asarray(vectors[0][1]).shape[0])
    index = HnswIndex(params, dim=dim, normalized=normalize)
    n = len(vectors)
    mat = np.empty((n, dim), dtype=np.float32)
    seen: set[str] = set()
    for i, (vid, vec) in enumerate(vectors):
        if vid in seen:
            raise DuplicateColumnError(f"duplicate vector id {vid!r}")
        seen.add(vid)
        arr = np.asarray(vec, dtype=np.float64)
        if arr.shape != (dim,):
            raise DimensionMismatchError(
                f"vector {vid!r} has shape {arr.shape}, expected ({dim},)")
        if normalize:
            norm = np.linalg.norm(arr)
            if norm == 0:
                raise ValueError(f"vector {vid!r} is zero; cannot normalize")
            arr = arr / norm
        mat[i] = arr
        index.ids.append(vid)

    rng = np.random.Generator(np.random.PCG64(params.seed))
    ml = params.ml
    levels = np.floor(-np.log(rng.uniform(size=n, low=np.nextafter(0, 1), high=1.0)) * ml)
    index.levels = levels.astype(np.int32)
    index.vectors = mat
    index._visited = np.zeros(n, dtype=np.int32)

    top = int(index.levels.max())
    for layer in range(top + 1):
        cap = index._cap(layer)
        index._adj.append(np.zeros((n, max(cap, params.m) + 1), dtype=np.int32))
        index._deg.append(np.zeros(n, dtype=np.int32))

    for i in range(n):
        index._insert(i)
    return index


def save_index(index: HnswIndex, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(INDEX_MAGIC)
        p = index.params
        fh.write(struct.pack(
            "<HiiiidqiiqiB",
            INDEX_VERSION, p.m, p.base_degree, p.ef_construction, p.ef_search,
            p.ml, p.seed, index.dim, len(index), index.entry_point,
            index.max_level, 1 if index.normalized else 0,
        ))
        meta_blob = json.dumps(index.meta).encode("utf-8")
        fh.write(struct.pack("<q", len(meta_blob)))
        fh.write(meta_blob)
        if any("\n" in vid for vid in index.ids):
            raise ValueError("vector ids must not contain newlines")
        blob = "\n".join(index.ids).encode("utf-8")
        fh.write(struct.pack("<q", len(blob)))
        fh.write(blob)
        if len(index) == 0:
            return
        fh.write(index.vectors.tobytes())
        fh.write(index.levels.tobytes())
        for layer in range(index.max_level + 1):
            deg = index._deg[layer]
            fh.write(deg.tobytes())
            flat = np.concatenate(
                [index._adj[layer][i, : deg[i]] for i in range(len(index))]
            ) if deg.sum() else np.empty(0, dtype=np.int32)
            fh.write(struct.pack("<q", flat.shape[0]))
            fh.write(flat.astype(np.int32).tobytes())


def load_index(path: str | Path) -> HnswIndex:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != INDEX_MAGIC:
            raise RepositoryFormatError(f"{path}: bad magic {magic!r}")
        header = fh.read(struct.calcsize("<HiiiidqiiqiB"))
        if len(header) != struct.calcsize("<HiiiidqiiqiB"):
            raise RepositoryFormatError(f"{path}: truncated header")
        (version, m, m0, efc, efs, ml, seed, dim, n, entry, max_level,
         normalized) = struct.unpack("<HiiiidqiiqiB", header)
        if version != INDEX_VERSION:
            raise RepositoryFormatError(f"{path}: unsupported version {version}")
        params = HnswParams(m=m, m0=m0, ef_construction=efc, ef_search=efs,
                            level_norm=ml, seed=seed)
        index = HnswIndex(params, dim=dim, normalized=bool(normalized))
        (meta_len,) = struct.unpack("<q", fh.read(8))
        meta_blob = fh.read(meta_len)
        if len(meta_blob) != meta_len:
            raise RepositoryFormatError(f"{path}: truncated metadata")
        index.meta = json.loads(meta_blob) if meta_blob else {}
        (blob_len,) = struct.unpack("<q", fh.read(8))
        blob = fh.read(blob_len)
        if len(blob) != blob_len:
            raise RepositoryFormatError(f"{path}: truncated id table")
        index.ids = blob.decode("utf-8").split("\n") if blob else []
        if len(index.ids) != n:
            raise RepositoryFormatError(f"{path}: id count mismatch")
        index.entry_point = entry
        index.max_level = max_level
        if n == 0:
            return index

        def read_arr(dtype, count):
            raw = fh.read(np.dtype(dtype).itemsize * count)
            if len(raw) != np.dtype(dtype).itemsize * count:
                raise RepositoryFormatError(f"{path}: truncated payload")
            return np.frombuffer(raw, dtype=dtype).copy()

        index.vectors = read_arr(np.float32, n * dim).reshape(n, dim)
        index.levels = read_arr(np.int32, n)
        index._visited = np.zeros(n, dtype=np.int32)
        for layer in range(max_level + 1):
            cap = index._cap(layer)
            deg = read_arr(np.int32, n)
            (flat_len,) = struct.unpack("<q", fh.read(8))
            flat = read_arr(np.int32, flat_len)
            adj = np.zeros((n, max(cap, params.m) + 1), dtype=np.int32)
            pos = 0
            for i in range(n):
                d = int(deg[i])
                adj[i, :d] = flat[pos:pos + d]
                pos += d
            if pos != flat_len:
                raise RepositoryFormatError(f"{path}: adjacency length mismatch")
            index._adj.append(adj)
            index._deg.append(deg)
    return index
