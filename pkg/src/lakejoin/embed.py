"""Column and cell embedding plus vector metric utilities.

The built-in embedder is feature hashing over whitespace tokens: each token
contributes ±1 to one of `dim` buckets, and the count vector is
L2-normalized. It is deterministic, order-insensitive by construction, and
exists so the whole pipeline runs self-contained; a real language-model
embedder attaches through the wire protocol in lakejoin.wire.

All pipeline vectors are kept unit-normalized, which makes Euclidean kNN
order identical to descending-cosine order (the bridge that lets an index
built for Euclidean distance realize cosine ranking).
"""

from __future__ import annotations

from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from lakejoin.errors import DimensionMismatchError
from lakejoin.hashing import hash64


@runtime_checkable
class ColumnEmbedder(Protocol):
    """Embeds rendered column text; deterministic within a session."""

    dim: int
    token_budget: int
    name: str

    def embed(self, text: str) -> np.ndarray: ...

    def embed_batch(self, items: Sequence[tuple[str, str]]) -> list[tuple[str, np.ndarray]]: ...

    def count_tokens(self, text: str) -> int: ...


@runtime_checkable
class CellEmbedder(Protocol):
    """Embeds individual cell strings into the matching metric space."""

    dim: int

    def embed_cell(self, cell: str) -> np.ndarray: ...


def hash_embed(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Feature-hash a text into a unit vector (zero vector for empty text).

    Tokens are accumulated as exact ±1 integer counts before normalization,
    so any token permutation produces a bit-identical vector.
    """
    if dim < 8:
        raise ValueError("dim must be >= 8")
    counts = np.zeros(dim, dtype=np.int64)
    for token in text.split():
        h = hash64(token, seed)
        idx = (h >> 1) % dim
        counts[idx] += 1 if (h & 1) else -1
    vec = counts.astype(np.float64)
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        return vec
    return vec / norm


class HashingColumnEmbedder:
    """Self-contained bag-of-tokens column embedder."""

    def __init__(self, dim: int = 256, seed: int = 0, token_budget: int = 512):
        if dim < 8:
            raise ValueError("dim must be >= 8")
        self.dim = dim
        self.seed = seed
        self.token_budget = token_budget
        self.name = f"hash:{dim}:{seed}"

    def embed(self, text: str) -> np.ndarray:
        return hash_embed(text, self.dim, self.seed)

    def embed_batch(self, items: Sequence[tuple[str, str]]) -> list[tuple[str, np.ndarray]]:
        return [(item_id, self.embed(text)) for item_id, text in items]

    def count_tokens(self, text: str) -> int:
        return len(text.split())


class HashingCellEmbedder:
    """Cell-level twin of the hashing embedder, for semantic joins."""

    def __init__(self, dim: int = 32, seed: int = 0):
        if dim < 8:
            raise ValueError("dim must be >= 8")
        self.dim = dim
        self.seed = seed
        self.name = f"hash:{dim}:{seed}"

    def embed_cell(self, cell: str) -> np.ndarray:
        return hash_embed(cell, self.dim, self.seed)


def _check_dims(u: np.ndarray, v: np.ndarray) -> None:
    if u.shape != v.shape:
        raise DimensionMismatchError(f"vector shapes differ: {u.shape} vs {v.shape}")


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    _check_dims(u, v)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine undefined for zero vectors")
    return float(np.dot(u, v) / (nu * nv))


def euclidean(u: np.ndarray, v: np.ndarray) -> float:
    _check_dims(u, v)
    return float(np.linalg.norm(u - v))


def normalize(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / norm


def parse_embedder_spec(spec: str):
    """Build an embedder from CLI syntax: hash:<dim>:<seed> or
    external:<host:port or command>."""
    kind, _, rest = spec.partition(":")
    if kind == "hash":
        parts = rest.split(":") if rest else []
        dim = int(parts[0]) if len(parts) > 0 and parts[0] else 256
        seed = int(parts[1]) if len(parts) > 1 and parts[1] else 0
        return HashingColumnEmbedder(dim=dim, seed=seed)
    if kind == "external":
        from lakejoin.wire import ExternalEmbedder

        return ExternalEmbedder.connect(rest)
    raise ValueError(f"unknown embedder spec {spec!r}")
