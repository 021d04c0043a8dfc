"""Synthetic corpus generation and search timing.

The generator plants query/target pairs with exact, known joinability (each
pair draws its cells from a private namespace so nothing else in the corpus
can disturb the overlap), on top of background columns drawn from a shared
vocabulary. The timing harness measures per-query wall clock with a warm-up
pass excluded, reporting the encoding and search phases separately for
embedding methods. Absolute numbers are hardware-bound; only scaling shapes
are asserted anywhere.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from lakejoin.ann import HnswParams, build
from lakejoin.contextualize import DEFAULT_PATTERN, Pattern, SampleStrategy, render
from lakejoin.corpus import Column, Repository
from lakejoin.embed import HashingColumnEmbedder
from lakejoin.kernels import BACKEND
from lakejoin.oracle import EquiIndex
from lakejoin.sketch import SketchIndex


@dataclass(frozen=True)
class CorpusSpec:
    n_columns: int
    min_cells: int = 5
    max_cells: int = 30
    vocab_size: int = 2000
    n_queries: int = 20
    planted_jn: tuple[float, ...] = ()    # one query/target pair per entry
    zipf_exponent: float | None = None    # skew for cell draws; None = uniform
    seed: int = 0

    def __post_init__(self):
        if self.min_cells < 5:
            raise ValueError("min_cells must be >= 5 (repository admission rule)")
        if self.max_cells < self.min_cells:
            raise ValueError("max_cells must be >= min_cells")
        if any(not 0 <= t <= 1 for t in self.planted_jn):
            raise ValueError("planted jn targets must be in [0, 1]")

    @classmethod
    def from_json(cls, source) -> "CorpusSpec":
        obj = json.loads(Path(source).read_text()) if isinstance(source, (str, Path)) else dict(source)
        if "planted_jn" in obj:
            obj["planted_jn"] = tuple(obj["planted_jn"])
        return cls(**obj)


@dataclass
class GeneratedCorpus:
    repo: Repository
    queries: list[Column]
    truth: dict[str, tuple[str, float]]  # query id -> (planted target id, jn)


def _draw_cells(rng, spec: CorpusSpec, n: int) -> tuple[str, ...]:
    picked: dict[str, None] = {}
    while len(picked) < n:
        if spec.zipf_exponent:
            vals = rng.zipf(spec.zipf_exponent, size=2 * n) % spec.vocab_size
        else:
            vals = rng.integers(0, spec.vocab_size, size=2 * n)
        for v in vals:
            picked.setdefault(f"w{int(v)}", None)
            if len(picked) == n:
                break
    return tuple(picked)


def generate(spec: CorpusSpec) -> GeneratedCorpus:
    """Deterministic for spec.seed. Planted pairs hit their target jn exactly
    (up to rounding the shared-cell count to an integer)."""
    rng = np.random.default_rng(spec.seed)
    columns: list[Column] = []
    queries: list[Column] = []
    truth: dict[str, tuple[str, float]] = {}

    n_background = spec.n_columns - len(spec.planted_jn)
    if n_background < 0:
        raise ValueError("more planted pairs than columns")
    for i in range(n_background):
        size = int(rng.integers(spec.min_cells, spec.max_cells + 1))
        columns.append(Column(
            id=f"bg{i:06d}",
            cells=_draw_cells(rng, spec, size),
            table_title=f"background table {i}",
            column_name=f"col{i}",
        ))

    for i, target_jn in enumerate(spec.planted_jn):
        size = int(rng.integers(spec.min_cells, spec.max_cells + 1))
        shared = round(target_jn * size)
        q_cells = tuple(f"q{i}s{j}" for j in range(shared)) + tuple(
            f"q{i}u{j}" for j in range(size - shared))
        t_cells = tuple(f"q{i}s{j}" for j in range(shared)) + tuple(
            f"q{i}t{j}" for j in range(size - shared))
        qid = f"q{i:04d}"
        tid = f"pt{i:06d}"
        queries.append(Column(id=qid, cells=q_cells,
                              table_title=f"planted query {i}", column_name="key"))
        columns.append(Column(id=tid, cells=t_cells,
                              table_title=f"planted target {i}", column_name="key"))
        truth[qid] = (tid, shared / size)

    for i in range(len(spec.planted_jn), spec.n_queries):
        size = int(rng.integers(spec.min_cells, spec.max_cells + 1))
        queries.append(Column(
            id=f"q{i:04d}",
            cells=_draw_cells(rng, spec, size),
            table_title=f"query table {i}",
            column_name="key",
        ))

    return GeneratedCorpus(repo=Repository(columns), queries=queries, truth=truth)


@dataclass
class TimingReport:
    per_query_ms: list[float]
    mean_ms: float
    p50_ms: float
    p95_ms: float
    encode_mean_ms: float | None = None
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def time_search(
    search_fn: Callable,
    queries: Sequence,
    repeats: int = 3,
    warmup: int = 1,
    encode_fn: Callable | None = None,
) -> TimingReport:
    """Mean/p50/p95 per-query latency of search_fn over `repeats` timed passes
    (after `warmup` untimed passes). With encode_fn, queries are encoded once
    per pass, timed separately, and search_fn receives the encoded form."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")

    def one_pass(timed: bool):
        search_times = np.zeros(len(queries))
        encode_times = np.zeros(len(queries))
        for qi, q in enumerate(queries):
            if encode_fn is not None:
                t0 = time.perf_counter()
                q = encode_fn(q)
                encode_times[qi] = time.perf_counter() - t0
            t0 = time.perf_counter()
            search_fn(q)
            search_times[qi] = time.perf_counter() - t0
        return search_times, encode_times

    for _ in range(warmup):
        one_pass(timed=False)
    search_acc = np.zeros(len(queries))
    encode_acc = np.zeros(len(queries))
    for _ in range(repeats):
        s, e = one_pass(timed=True)
        search_acc += s
        encode_acc += e
    per_query = search_acc / repeats * 1000.0
    return TimingReport(
        per_query_ms=[float(x) for x in per_query],
        mean_ms=float(per_query.mean()),
        p50_ms=float(np.percentile(per_query, 50)),
        p95_ms=float(np.percentile(per_query, 95)),
        encode_mean_ms=(float(encode_acc.mean() / repeats * 1000.0)
                        if encode_fn is not None else None),
    )


def run_bench(
    spec: CorpusSpec,
    method: str,
    k: int = 10,
    repeats: int = 3,
    pattern: Pattern = DEFAULT_PATTERN,
    token_budget: int = 512,
    embed_dim: int = 256,
    hnsw: HnswParams | None = None,
    minhash_m: int = 256,
    seed: int = 0,
) -> dict:
    """Generate a corpus and time one search method over its queries."""
    data = generate(spec)
    repo = data.repo

    if method == "oracle":
        index = EquiIndex(repo)
        report = time_search(lambda q: index.topk(q, k), data.queries, repeats)
    elif method == "minhash":
        index = SketchIndex(repo, m=minhash_m, seed=seed)
        report = time_search(lambda q: index.topk(q, k), data.queries, repeats)
    elif method == "ann":
        embedder = HashingColumnEmbedder(dim=embed_dim, seed=seed,
                                         token_budget=token_budget)
        strategy = SampleStrategy.frequency(token_budget)
        vectors = [
            (cid, embedder.embed(render(repo[cid], pattern, strategy,
                                        repo.doc_freq).text))
            for cid in sorted(repo.ids())
        ]
        index = build(vectors, hnsw or HnswParams(seed=seed))

        def encode(q: Column):
            return embedder.embed(render(q, pattern, strategy, repo.doc_freq).text)

        report = time_search(lambda v: index.knn(v, k), data.queries, repeats,
                             encode_fn=encode)
    else:
        raise ValueError(f"unknown method {method!r}")

    report.info = {
        "method": method,
        "k": k,
        "repeats": repeats,
        "kernel_backend": BACKEND,
        "n_columns": len(repo),
        "n_queries": len(data.queries),
        "spec": asdict(spec),
    }
    return report.to_dict()
