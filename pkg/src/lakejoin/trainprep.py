"""Training-data generation for the embedding model, plus the ranking loss.

Positives are ordered column pairs (X, Y) from a repository self-join with
jn(X, Y) >= t (both directions are emitted since jn is asymmetric; consumers
may dedupe). A fraction of positives is augmented by permuting X's cells and
re-rendering the text, which teaches order-insensitivity: with shuffle rate
r, augmented examples make up r/(1+r) of the output. Batches pack exactly N
pairs with pairwise-distinct y ids so that every in-batch (X_i, Y_j), i != j,
serves as a negative.

The loss evaluated here is the multiple-negatives ranking loss
    L = -(1/N) * sum_i [ S(X_i, Y_i) - log sum_j exp(S(X_i, Y_j)) ]
with S = cosine similarity; gradient-based fine-tuning lives in the sidecar,
this implementation is for verification and analysis.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from typing import Sequence, Union

import numpy as np

from lakejoin.contextualize import DEFAULT_PATTERN, Pattern, SampleStrategy, render
from lakejoin.corpus import Column, Repository
from lakejoin.errors import DimensionMismatchError
from lakejoin.oracle import EquiIndex, MatchConfig, SemanticIndex

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    t: float
    r: float = 0.0
    batch_size: int = 32
    join_mode: Union[str, MatchConfig] = "equi"   # "equi" or a MatchConfig
    seed: int = 0
    sample_size: int | None = 30000               # self-join sample cap

    def __post_init__(self):
        if not 0 < self.t <= 1:
            raise ValueError("threshold t must be in (0, 1]")
        if self.r < 0:
            raise ValueError("shuffle rate r must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for in-batch negatives")
        if isinstance(self.join_mode, str) and self.join_mode != "equi":
            raise ValueError("join_mode must be 'equi' or a MatchConfig")


@dataclass(frozen=True)
class PositivePair:
    x_id: str
    y_id: str
    x_text: str
    y_text: str
    jn: float
    augmented: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "PositivePair":
        return cls(**json.loads(line))


@dataclass(frozen=True)
class TrainBatch:
    pairs: tuple[PositivePair, ...]

    def __post_init__(self):
        y_ids = [p.y_id for p in self.pairs]
        if len(set(y_ids)) != len(y_ids):
            raise ValueError("batch has duplicate y ids")

    def __len__(self) -> int:
        return len(self.pairs)


class _RenderCache:
    def __init__(self, repo: Repository, pattern: Pattern,
                 strategy: SampleStrategy | None):
        self._repo = repo
        self._pattern = pattern
        self._strategy = strategy or SampleStrategy.frequency()
        self._cache: dict[str, str] = {}

    def text_of(self, cid: str) -> str:
        if cid not in self._cache:
            self._cache[cid] = self.text_for(self._repo[cid])
        return self._cache[cid]

    def text_for(self, col: Column) -> str:
        return render(col, self._pattern, self._strategy, self._repo.doc_freq).text


def self_join_positives(
    repo: Repository,
    cfg: TrainConfig,
    pattern: Pattern = DEFAULT_PATTERN,
    strategy: SampleStrategy | None = None,
) -> list[PositivePair]:
    """All ordered pairs (X, Y), X != Y, with jn(X, Y) >= t, rendered as text.

    Repositories larger than cfg.sample_size are self-joined on a uniform
    sample (seeded) instead of in full.
    """
    ids = sorted(repo.ids())
    if cfg.sample_size is not None and len(ids) > cfg.sample_size:
        rng = np.random.default_rng(cfg.seed)
        ids = sorted(rng.choice(ids, size=cfg.sample_size, replace=False))
        logger.info("self-join on a sample of %d of %d columns", len(ids), len(repo))
    subset = Repository([repo[cid] for cid in ids])
    texts = _RenderCache(repo, pattern, strategy)

    pairs: list[PositivePair] = []
    if cfg.join_mode == "equi":
        index = EquiIndex(subset)
        for x_id in ids:
            x = repo[x_id]
            threshold = cfg.t * len(x.cells) - 1e-9
            for y_id, overlap in sorted(index.candidate_overlaps(x).items()):
                if y_id == x_id or overlap < threshold:
                    continue
                pairs.append(PositivePair(
                    x_id=x_id, y_id=y_id,
                    x_text=texts.text_of(x_id), y_text=texts.text_of(y_id),
                    jn=overlap / len(x.cells),
                ))
    else:
        index = SemanticIndex(subset, cfg.join_mode)
        for x_id in ids:
            for y_id, jn in sorted(index.scores(repo[x_id]).items()):
                if y_id == x_id or jn < cfg.t - 1e-9:
                    continue
                pairs.append(PositivePair(
                    x_id=x_id, y_id=y_id,
                    x_text=texts.text_of(x_id), y_text=texts.text_of(y_id),
                    jn=jn,
                ))
    return pairs


def augment_shuffle(
    pairs: Sequence[PositivePair],
    r: float,
    seed: int,
    repo: Repository,
    pattern: Pattern = DEFAULT_PATTERN,
    strategy: SampleStrategy | None = None,
) -> list[PositivePair]:
    """Append round(r * |pairs|) shuffled-X copies of seeded-random source
    pairs; the result is |pairs| * (1 + r) examples of which r/(1+r) are
    augmented (up to rounding)."""
    if r < 0:
        raise ValueError("shuffle rate must be >= 0")
    out = list(pairs)
    n_aug = int(round(r * len(pairs)))
    if n_aug == 0:
        return out
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(pairs), size=n_aug, replace=n_aug > len(pairs))
    texts = _RenderCache(repo, pattern, strategy)
    for i in chosen:
        src = pairs[int(i)]
        col = repo[src.x_id]
        perm = rng.permutation(len(col.cells))
        shuffled = Column(
            id=col.id,
            cells=tuple(col.cells[int(j)] for j in perm),
            table_title=col.table_title,
            column_name=col.column_name,
            table_context=col.table_context,
        )
        out.append(PositivePair(
            x_id=src.x_id, y_id=src.y_id,
            x_text=texts.text_for(shuffled), y_text=src.y_text,
            jn=src.jn, augmented=True,
        ))
    return out


def make_batches(
    pairs: Sequence[PositivePair],
    n: int,
    seed: int,
) -> tuple[list[TrainBatch], int]:
    """Shuffle, then first-fit pairs into batches of exactly n with distinct
    y ids. Returns (complete batches, number of dropped pairs)."""
    if n < 2:
        raise ValueError("batch size must be >= 2")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pairs))
    open_batches: list[tuple[list[PositivePair], set[str]]] = []
    complete: list[TrainBatch] = []
    for i in order:
        p = pairs[int(i)]
        for members, ys in open_batches:
            if len(members) < n and p.y_id not in ys:
                members.append(p)
                ys.add(p.y_id)
                break
        else:
            open_batches.append(([p], {p.y_id}))
    dropped = 0
    for members, _ in open_batches:
        if len(members) == n:
            complete.append(TrainBatch(pairs=tuple(members)))
        else:
            dropped += len(members)
    if dropped:
        logger.info("dropped %d pairs that could not fill a batch of %d", dropped, n)
    return complete, dropped


def mnr_loss(x_embeds: Sequence[np.ndarray], y_embeds: Sequence[np.ndarray]) -> float:
    """Multiple-negatives ranking loss over a batch of embedding pairs,
    evaluated with log-sum-exp stabilization."""
    x = np.asarray(x_embeds, dtype=np.float64)
    y = np.asarray(y_embeds, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2:
        raise DimensionMismatchError(
            f"expected matching (N, dim) batches, got {x.shape} and {y.shape}")
    xn = np.linalg.norm(x, axis=1, keepdims=True)
    yn = np.linalg.norm(y, axis=1, keepdims=True)
    if (xn == 0).any() or (yn == 0).any():
        raise ValueError("zero vector in loss batch")
    s = (x / xn) @ (y / yn).T
    smax = s.max(axis=1, keepdims=True)
    lse = (smax[:, 0] + np.log(np.exp(s - smax).sum(axis=1)))
    return float(-(np.diag(s) - lse).mean())
