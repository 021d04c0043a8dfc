"""Retrieval-accuracy metrics.

precision@k compares a method's top-k ids with the exact oracle's top-k;
NDCG@k discounts true joinability by rank, DCG = sum_i jn(Q, X_i)/log2(i+1),
normalized by the exact ranking's DCG. When full labeling is infeasible,
pooled precision/recall/F1 judge each method against the labeled subset of
the retrieved pool (the union of all compared methods' results).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from lakejoin.errors import LakejoinError


class PoolCoverageError(LakejoinError):
    """A method retrieved an id outside the labeled pool."""


def _ids(results) -> list[str]:
    """Accept either [(id, score), ...] or [id, ...]."""
    return [r[0] if isinstance(r, (tuple, list)) else r for r in results]


def precision_at_k(model, exact, k: int) -> float:
    """|top-k(model) ∩ top-k(exact)| / k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return len(set(_ids(model)[:k]) & set(_ids(exact)[:k])) / k


def dcg_at_k(results, jn_fn: Callable[[str], float], k: int) -> float:
    return sum(jn_fn(cid) / math.log2(i + 2)
               for i, cid in enumerate(_ids(results)[:k]))


def ndcg_at_k(model, exact, jn_fn: Callable[[str], float], k: int) -> float:
    """DCG(model) / DCG(exact); an all-zero exact ranking scores 1.0 since no
    better ordering exists."""
    if k < 1:
        raise ValueError("k must be >= 1")
    dcg_exact = dcg_at_k(exact, jn_fn, k)
    if dcg_exact == 0.0:
        return 1.0
    return dcg_at_k(model, jn_fn, k) / dcg_exact


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class LabelPool:
    """Per-query positive labels; coverage (the full judged pool) is optional
    but enables the must-be-a-union check."""

    positives: Mapping[str, frozenset[str]]
    coverage: Mapping[str, frozenset[str]] | None = None


def _prf(retrieved: set[str], positives: frozenset[str]) -> PRF:
    tp = len(retrieved & positives)
    p = tp / len(retrieved) if retrieved else 0.0
    r = tp / len(positives) if positives else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return PRF(p, r, f1)


def pooled_prf(
    results_by_method: Mapping[str, Mapping[str, Sequence]],
    pool: LabelPool,
) -> dict[str, PRF]:
    """Per-method precision/recall/F1 against the pool, averaged over queries
    with equal weight."""
    out: dict[str, PRF] = {}
    for method, per_query in results_by_method.items():
        scores: list[PRF] = []
        for qid, results in per_query.items():
            if qid not in pool.positives:
                raise PoolCoverageError(f"query {qid!r} missing from label pool")
            retrieved = set(_ids(results))
            if pool.coverage is not None:
                extra = retrieved - pool.coverage[qid]
                if extra:
                    raise PoolCoverageError(
                        f"{method}/{qid}: retrieved ids outside the pool: "
                        f"{sorted(extra)[:5]}")
            scores.append(_prf(retrieved, pool.positives[qid]))
        n = len(scores)
        out[method] = PRF(
            precision=sum(s.precision for s in scores) / n if n else 0.0,
            recall=sum(s.recall for s in scores) / n if n else 0.0,
            f1=sum(s.f1 for s in scores) / n if n else 0.0,
        )
    return out


@dataclass
class EvalReport:
    """precision@k and NDCG@k per query and averaged, plus optional pooled
    P/R/F1 per method."""

    ks: list[int]
    per_query_precision: dict[str, dict[int, float]] = field(default_factory=dict)
    per_query_ndcg: dict[str, dict[int, float]] = field(default_factory=dict)
    pooled: dict[str, PRF] | None = None

    @property
    def mean_precision(self) -> dict[int, float]:
        return self._mean(self.per_query_precision)

    @property
    def mean_ndcg(self) -> dict[int, float]:
        return self._mean(self.per_query_ndcg)

    def _mean(self, per_query: dict[str, dict[int, float]]) -> dict[int, float]:
        if not per_query:
            return {k: 0.0 for k in self.ks}
        return {
            k: sum(v[k] for v in per_query.values()) / len(per_query)
            for k in self.ks
        }

    def to_dict(self) -> dict:
        out = {
            "ks": self.ks,
            "mean_precision": {str(k): v for k, v in self.mean_precision.items()},
            "mean_ndcg": {str(k): v for k, v in self.mean_ndcg.items()},
            "per_query_precision": {
                q: {str(k): v for k, v in kv.items()}
                for q, kv in self.per_query_precision.items()},
            "per_query_ndcg": {
                q: {str(k): v for k, v in kv.items()}
                for q, kv in self.per_query_ndcg.items()},
        }
        if self.pooled is not None:
            out["pooled"] = {
                m: {"precision": s.precision, "recall": s.recall, "f1": s.f1}
                for m, s in self.pooled.items()}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        mp = self.mean_precision
        mn = self.mean_ndcg
        lines = [
            f"{'k':>6}  {'precision@k':>12}  {'ndcg@k':>12}",
            "-" * 34,
        ]
        for k in self.ks:
            lines.append(f"{k:>6}  {mp[k]:>12.4f}  {mn[k]:>12.4f}")
        if self.pooled:
            lines.append("")
            lines.append(f"{'method':>16}  {'prec':>8}  {'recall':>8}  {'f1':>8}")
            lines.append("-" * 46)
            for m, s in self.pooled.items():
                lines.append(
                    f"{m:>16}  {s.precision:>8.4f}  {s.recall:>8.4f}  {s.f1:>8.4f}")
        return "\n".join(lines)


def evaluate(
    exact_by_query: Mapping[str, Sequence],
    model_by_query: Mapping[str, Sequence],
    jn_fn: Callable[[str, str], float],
    ks: Sequence[int],
) -> EvalReport:
    """Score a model's rankings against the exact oracle's for shared
    queries; jn_fn(query_id, column_id) supplies true joinability for NDCG."""
    report = EvalReport(ks=list(ks))
    for qid, exact in exact_by_query.items():
        if qid not in model_by_query:
            continue
        model = model_by_query[qid]
        report.per_query_precision[qid] = {
            k: precision_at_k(model, exact, k) for k in ks}
        report.per_query_ndcg[qid] = {
            k: ndcg_at_k(model, exact, lambda cid: jn_fn(qid, cid), k) for k in ks}
    return report


# ---------------------------------------------------------------------------
# File formats: ranked results and label pools, one JSON object per line.
# ---------------------------------------------------------------------------


def save_results_jsonl(results_by_query: Mapping[str, Sequence], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for qid, results in results_by_query.items():
            fh.write(json.dumps({
                "query_id": qid,
                "results": [[cid, float(score)] for cid, score in results],
            }, ensure_ascii=False) + "\n")


def load_results_jsonl(path: str | Path) -> dict[str, list[tuple[str, float]]]:
    out: dict[str, list[tuple[str, float]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out[obj["query_id"]] = [(cid, float(s)) for cid, s in obj["results"]]
    return out


def save_label_pool(pool: LabelPool, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for qid, positives in pool.positives.items():
            obj = {"query_id": qid, "positive_ids": sorted(positives)}
            if pool.coverage is not None:
                obj["pool_ids"] = sorted(pool.coverage[qid])
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def load_label_pool(path: str | Path) -> LabelPool:
    positives: dict[str, frozenset[str]] = {}
    coverage: dict[str, frozenset[str]] = {}
    has_coverage = False
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            qid = obj["query_id"]
            positives[qid] = frozenset(obj["positive_ids"])
            if "pool_ids" in obj:
                has_coverage = True
                coverage[qid] = frozenset(obj["pool_ids"])
    return LabelPool(positives=positives,
                     coverage=coverage if has_coverage else None)
