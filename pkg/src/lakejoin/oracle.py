"""Exact joinability and exact top-k search.

Joinability jn(Q, X) is the fraction of Q's cells with at least one match in
X: exact string equality for equi-joins, cell-embedding distance <= tau for
semantic joins. It is asymmetric. The top-k searches here are exact (always
equal to a linear scan) and serve as ground truth for every approximate
method in the package.

Equi top-k runs on an inverted index with prefix-filter pruning: cells are
mapped to integer tokens ordered infrequent-first, and scanning the query's
token postings stops as soon as no unseen column can still reach the running
k-th overlap bound. Semantic top-k optionally prunes cell-distance
computations with pivot vectors and the triangle inequality; pruning changes
cost only, never results.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from lakejoin.corpus import Column, Repository
from lakejoin.errors import EmptyColumnError
from lakejoin.kernels import sorted_overlap

logger = logging.getLogger(__name__)

# (column_id, score) pairs: score non-increasing, ties by ascending id.
SearchResult = list[tuple[str, float]]

DEFAULT_PIVOTS = 8


def equi_joinability(q: Column, x: Column) -> float:
    """|Q ∩ X| / |Q| under exact string equality."""
    if not q.cells:
        raise EmptyColumnError("query column has no cells")
    return len(q.cell_set & x.cell_set) / len(q.cells)


@dataclass(frozen=True)
class MatchConfig:
    """Semantic matching: two cells match when the Euclidean distance of
    their embeddings is at most tau."""

    cell_embedder: object  # CellEmbedder: .dim, .embed_cell(str) -> vector
    tau: float
    metric: str = "euclidean"

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.metric != "euclidean":
            raise ValueError(f"unsupported metric {self.metric!r}")


def _cell_matrix(col: Column, cfg: MatchConfig) -> np.ndarray:
    emb = cfg.cell_embedder
    return np.stack([np.asarray(emb.embed_cell(c), dtype=np.float64)
                     for c in col.cells])


def _matched_fraction(qv: np.ndarray, xv: np.ndarray, tau: float) -> float:
    # full distance matrix; fine for oracle-scale columns
    d2 = ((qv[:, None, :] - xv[None, :, :]) ** 2).sum(axis=2)
    matched = (d2 <= tau * tau + 1e-18).any(axis=1)
    return matched.sum() / qv.shape[0]


def semantic_joinability(q: Column, x: Column, cfg: MatchConfig) -> float:
    """Fraction of Q's cells whose embedding has >= 1 X-cell embedding within
    distance tau."""
    if not q.cells:
        raise EmptyColumnError("query column has no cells")
    return float(_matched_fraction(_cell_matrix(q, cfg), _cell_matrix(x, cfg),
                                   cfg.tau))


def _rank_topk(scores: dict[str, float], all_ids: Sequence[str], k: int) -> SearchResult:
    """Order by (score desc, id asc); pad with zero-score ids up to k."""
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    if len(ranked) < k:
        missing = sorted(set(all_ids) - scores.keys())
        ranked.extend((cid, 0.0) for cid in missing[: k - len(ranked)])
    return ranked[:k]


class EquiIndex:
    """Inverted index over a repository for exact top-k overlap search.

    Cell values become integer tokens sorted by (doc freq asc, value), so
    every column's token array is "rarest first": prefix filtering then gets
    maximal pruning power.
    """

    def __init__(self, repo: Repository):
        self._repo = repo
        vocab = sorted(repo.doc_freq, key=lambda v: (repo.doc_freq[v], v))
        self._token_of = {v: t for t, v in enumerate(vocab)}
        self._ids: list[str] = sorted(repo.ids())
        self._tokens: list[np.ndarray] = []
        npost: dict[int, int] = {}
        for cid in self._ids:
            toks = np.sort(np.fromiter(
                (self._token_of[c] for c in repo[cid].cells),
                dtype=np.int64,
            ))
            self._tokens.append(toks)
            for t in toks:
                npost[int(t)] = npost.get(int(t), 0) + 1
        # postings: token -> (column positions array, in-column offsets array)
        self._postings: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        fill: dict[int, int] = {}
        for t, n in npost.items():
            self._postings[t] = (np.empty(n, np.int32), np.empty(n, np.int32))
            fill[t] = 0
        for ci, toks in enumerate(self._tokens):
            for off, t in enumerate(toks):
                t = int(t)
                cols, offs = self._postings[t]
                j = fill[t]
                cols[j] = ci
                offs[j] = off
                fill[t] = j + 1

    def __len__(self) -> int:
        return len(self._ids)

    def query_tokens(self, q: Column) -> np.ndarray:
        toks = [self._token_of[c] for c in q.cells if c in self._token_of]
        return np.sort(np.array(toks, dtype=np.int64))

    def candidate_overlaps(self, q: Column) -> dict[str, int]:
        """Exact |Q ∩ X| for every column sharing at least one cell with Q."""
        qtoks = self.query_tokens(q)
        if qtoks.shape[0] == 0:
            return {}
        hit_cols = np.concatenate([self._postings[int(t)][0] for t in qtoks])
        counts = np.bincount(hit_cols, minlength=len(self._ids))
        (nz,) = np.nonzero(counts)
        return {self._ids[int(ci)]: int(counts[ci]) for ci in nz}

    def topk(self, q: Column, k: int) -> SearchResult:
        if not q.cells:
            raise EmptyColumnError("query column has no cells")
        if k < 1:
            raise ValueError("k must be >= 1")
        qsize = len(q.cells)
        qtoks = self.query_tokens(q)
        overlaps: dict[int, int] = {}
        # running k-th overlap bound, maintained as a sorted top-k list
        best: list[int] = []

        for i in range(qtoks.shape[0]):
            remaining = qtoks.shape[0] - i
            bound = best[k - 1] if len(best) >= k else 0
            if remaining < bound:
                break  # prefix filter: unseen columns cannot reach the top-k
            cols, offs = self._postings[int(qtoks[i])]
            for j in range(cols.shape[0]):
                ci = int(cols[j])
                if ci in overlaps:
                    continue
                ov = 1 + sorted_overlap(qtoks, self._tokens[ci],
                                        i + 1, int(offs[j]) + 1)
                overlaps[ci] = ov
                if len(best) < k:
                    best.append(ov)
                    best.sort(reverse=True)
                elif ov > best[k - 1]:
                    best[k - 1] = ov
                    best.sort(reverse=True)

        scores = {self._ids[ci]: ov / qsize for ci, ov in overlaps.items()}
        return _rank_topk(scores, self._ids, k)


def exact_equi_topk(q: Column, repo: Repository, k: int,
                    index: EquiIndex | None = None) -> SearchResult:
    """Exact top-k by equi-joinability; ties broken by ascending column id.

    Pass a prebuilt EquiIndex when running many queries over one repository.
    """
    if index is None:
        index = EquiIndex(repo)
    return index.topk(q, k)


class SemanticIndex:
    """Cell-embedding matrices for a repository, with optional pivot tables.

    Pivots are chosen by farthest-first traversal over a sample of the
    repository's cell vectors; |d(q,p) - d(x,p)| <= d(q,x) then lower-bounds
    every candidate distance, letting most exact computations be skipped.
    """

    def __init__(self, repo: Repository, cfg: MatchConfig,
                 pivots: int | None = DEFAULT_PIVOTS, seed: int = 0):
        self._repo = repo
        self._cfg = cfg
        self._ids = sorted(repo.ids())
        self._mats = [_cell_matrix(repo[cid], cfg) for cid in self._ids]
        self._pivots: np.ndarray | None = None
        self._pivot_dists: list[np.ndarray] | None = None
        if pivots and self._mats:
            self._pivots = self._choose_pivots(pivots, seed)
            self._pivot_dists = [self._dist_to_pivots(m) for m in self._mats]

    def _choose_pivots(self, p: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        pool = np.concatenate(self._mats, axis=0)
        if pool.shape[0] > 2048:
            pool = pool[rng.choice(pool.shape[0], 2048, replace=False)]
        chosen = [int(rng.integers(pool.shape[0]))]
        dmin = np.linalg.norm(pool - pool[chosen[0]], axis=1)
        while len(chosen) < min(p, pool.shape[0]):
            nxt = int(dmin.argmax())
            chosen.append(nxt)
            dmin = np.minimum(dmin, np.linalg.norm(pool - pool[nxt], axis=1))
        return pool[chosen]

    def _dist_to_pivots(self, mat: np.ndarray) -> np.ndarray:
        diff = mat[:, None, :] - self._pivots[None, :, :]
        return np.sqrt((diff ** 2).sum(axis=2))

    @property
    def uses_pivots(self) -> bool:
        return self._pivots is not None

    def joinability_with(self, qmat: np.ndarray, target_pos: int) -> float:
        xmat = self._mats[target_pos]
        tau = self._cfg.tau
        if not self.uses_pivots:
            return float(_matched_fraction(qmat, xmat, tau))
        qp = self._dist_to_pivots(qmat)
        xp = self._pivot_dists[target_pos]
        # lower bound per (q cell, x cell); the 1e-9 slack absorbs float error
        # so pruning can never flip a borderline exact comparison
        lb = np.abs(qp[:, None, :] - xp[None, :, :]).max(axis=2)
        cand_q, cand_x = np.nonzero(lb <= tau + 1e-9)
        if cand_q.size == 0:
            return 0.0
        d2 = ((qmat[cand_q] - xmat[cand_x]) ** 2).sum(axis=1)
        hit = d2 <= tau * tau + 1e-18
        matched = np.zeros(qmat.shape[0], dtype=bool)
        matched[cand_q[hit]] = True
        return float(matched.sum() / qmat.shape[0])

    def scores(self, q: Column) -> dict[str, float]:
        """Semantic joinability from q to every indexed column."""
        if not q.cells:
            raise EmptyColumnError("query column has no cells")
        qmat = _cell_matrix(q, self._cfg)
        return {cid: self.joinability_with(qmat, pos)
                for pos, cid in enumerate(self._ids)}

    def topk(self, q: Column, k: int) -> SearchResult:
        if k < 1:
            raise ValueError("k must be >= 1")
        return _rank_topk(self.scores(q), self._ids, k)


def exact_semantic_topk(q: Column, repo: Repository, k: int, cfg: MatchConfig,
                        pivots: int | None = DEFAULT_PIVOTS,
                        index: SemanticIndex | None = None) -> SearchResult:
    """Exact top-k by semantic joinability. `pivots=None` disables pruning;
    results are identical either way."""
    if index is None:
        index = SemanticIndex(repo, cfg, pivots=pivots)
    return index.topk(q, k)
