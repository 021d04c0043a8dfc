"""Command-line surface: ingest, transform, index, search, oracle, traingen,
eval, bench.

Flag precedence is command line > --config file > built-in defaults. The
config file is flat `key = value` lines (# comments allowed); keys share
names with the long flags they set, e.g. `pattern = title-colname-stat-col`.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from lakejoin import ann, bench
from lakejoin.contextualize import DEFAULT_PATTERN, Pattern, SampleStrategy, render
from lakejoin.corpus import (
    ExplicitIndex,
    MaxDistinct,
    build_repository,
    column_to_json,
    ingest_table,
    load_repository,
    parse_csv,
    parse_jsonl_columns,
    save_repository,
)
from lakejoin.embed import HashingCellEmbedder, parse_embedder_spec
from lakejoin.errors import LakejoinError
from lakejoin.evalkit import (
    evaluate,
    load_label_pool,
    load_results_jsonl,
    pooled_prf,
)
from lakejoin.oracle import EquiIndex, MatchConfig, SemanticIndex
from lakejoin.sketch import SketchIndex
from lakejoin.trainprep import (
    TrainConfig,
    augment_shuffle,
    make_batches,
    self_join_positives,
)

logger = logging.getLogger("lakejoin")


def load_config(path: str | Path) -> dict:
    """Flat key = value file; values are coerced to int/float when they look
    like numbers."""
    out: dict = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise LakejoinError(f"config line without '=': {raw!r}")
        key, _, value = line.partition("=")
        value = value.strip().strip("\"'")
        for conv in (int, float):
            try:
                value = conv(value)
                break
            except ValueError:
                continue
        out[key.strip().replace("-", "_")] = value
    return out


def _out_stream(path):
    return open(path, "w", encoding="utf-8") if path else sys.stdout


def _load_queries(path):
    return parse_jsonl_columns(path, min_cells=1)


def _strategy(args) -> SampleStrategy:
    return SampleStrategy.parse(args.strategy, token_budget=args.budget)


def _key_selector(text: str):
    if text == "maxdistinct":
        return MaxDistinct()
    kind, _, n = text.partition(":")
    if kind == "explicit" and n.lstrip("-").isdigit():
        return ExplicitIndex(int(n))
    raise LakejoinError(f"bad --key value {text!r}; use explicit:<n> or maxdistinct")


def _match_config(args) -> MatchConfig:
    emb_spec = args.cell_embedder
    kind, _, rest = emb_spec.partition(":")
    if kind != "hash":
        raise LakejoinError("cell embedder must be hash:<dim>:<seed>")
    parts = rest.split(":")
    dim = int(parts[0]) if parts and parts[0] else 32
    seed = int(parts[1]) if len(parts) > 1 else 0
    return MatchConfig(cell_embedder=HashingCellEmbedder(dim, seed), tau=args.tau)


def _run_queries(fn, queries, workers: int):
    if workers <= 1:
        return [fn(q) for q in queries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, queries))


def _emit_results(queries, results, metric: str, out_path) -> None:
    fh = _out_stream(out_path)
    try:
        for q, ranked in zip(queries, results):
            fh.write(json.dumps({
                "query_id": q.id,
                "metric": metric,
                "results": [[cid, float(s)] for cid, s in ranked],
            }, ensure_ascii=False) + "\n")
    finally:
        if fh is not sys.stdout:
            fh.close()


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    path = Path(args.input)
    if args.format == "jsonl":
        cols = parse_jsonl_columns(path, min_cells=args.min_cells)
    else:
        delim = "\t" if args.format == "tsv" else ","
        files = sorted(path.glob(f"*.{args.format}")) if path.is_dir() else [path]
        if not files:
            raise LakejoinError(f"no .{args.format} files under {path}")
        selector = _key_selector(args.key)
        cols = []
        for f in files:
            cols.extend(ingest_table(parse_csv(f, delimiter=delim), selector,
                                     min_cells=args.min_cells))
    repo = build_repository(cols, min_cells=args.min_cells)
    save_repository(repo, args.out)
    logger.info("ingested %d columns -> %s", len(repo), args.out)
    print(f"wrote {len(repo)} columns to {args.out}")
    return 0


def cmd_transform(args) -> int:
    repo = load_repository(args.repo)
    pattern = Pattern.from_name(args.pattern)
    strategy = _strategy(args)
    fh = _out_stream(args.out)
    try:
        for cid in sorted(repo.ids()):
            ct = render(repo[cid], pattern, strategy, repo.doc_freq)
            fh.write(json.dumps({
                "id": cid, "text": ct.text, "truncated": ct.truncated,
            }, ensure_ascii=False) + "\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def cmd_index(args) -> int:
    repo = load_repository(args.repo)
    pattern = Pattern.from_name(args.pattern)
    embedder = parse_embedder_spec(args.embedder)
    budget = min(args.budget, embedder.token_budget)
    strategy = SampleStrategy.parse(args.strategy, token_budget=budget)
    logger.info("embedding %d columns with %s (budget %d)",
                len(repo), embedder.name, budget)
    items = [(cid, render(repo[cid], pattern, strategy, repo.doc_freq).text)
             for cid in sorted(repo.ids())]
    vectors = embedder.embed_batch(items)
    params = ann.HnswParams(m=args.m, ef_construction=args.efc,
                            ef_search=args.efs, seed=args.seed)
    logger.info("building HNSW index (m=%d, efc=%d, seed=%d)",
                args.m, args.efc, args.seed)
    index = ann.build(vectors, params)
    index.meta = {
        "embedder": args.embedder,
        "pattern": args.pattern,
        "strategy": args.strategy,
        "budget": budget,
    }
    ann.save_index(index, args.out)
    print(f"indexed {len(index)} vectors to {args.out}")
    return 0


def cmd_search(args) -> int:
    queries = _load_queries(args.queries)
    if args.method == "minhash":
        if not args.repo:
            raise LakejoinError("--repo is required for --method minhash")
        repo = load_repository(args.repo)
        index = SketchIndex(repo, m=args.m_signature, seed=args.seed)
        results = _run_queries(lambda q: index.topk(q, args.k), queries,
                               args.workers)
        _emit_results(queries, results, "jn_estimate", args.out)
        return 0

    if not args.index:
        raise LakejoinError("--index is required for --method ann")
    index = ann.load_index(args.index)
    meta = index.meta
    embedder = parse_embedder_spec(args.embedder or meta.get("embedder", "hash"))
    pattern = Pattern.from_name(meta.get("pattern", DEFAULT_PATTERN.value))
    budget = int(meta.get("budget", embedder.token_budget))
    strategy = SampleStrategy.parse(meta.get("strategy", "frequency"),
                                    token_budget=budget)
    doc_freq: dict = {}
    if args.repo:
        doc_freq = load_repository(args.repo).doc_freq

    def one(q):
        vec = embedder.embed(render(q, pattern, strategy, doc_freq).text)
        return index.knn(vec, args.k, ef_search=args.efs)

    results = _run_queries(one, queries, args.workers)
    _emit_results(queries, results, "euclidean_distance", args.out)
    return 0


def cmd_oracle(args) -> int:
    repo = load_repository(args.repo)
    queries = _load_queries(args.queries)
    if args.mode == "equi":
        index = EquiIndex(repo)
        results = _run_queries(lambda q: index.topk(q, args.k), queries,
                               args.workers)
    else:
        cfg = _match_config(args)
        pivots = args.pivots if args.pivots > 0 else None
        index = SemanticIndex(repo, cfg, pivots=pivots)
        results = _run_queries(lambda q: index.topk(q, args.k), queries,
                               args.workers)
    _emit_results(queries, results, "joinability", args.out)
    return 0


def cmd_traingen(args) -> int:
    repo = load_repository(args.repo)
    join_mode = "equi" if args.mode == "equi" else _match_config(args)
    cfg = TrainConfig(t=args.t, r=args.r, batch_size=args.N,
                      join_mode=join_mode, seed=args.seed,
                      sample_size=args.sample_size)
    pattern = Pattern.from_name(args.pattern)
    strategy = _strategy(args)
    logger.info("self-join (mode=%s, t=%.3f, seed=%d)", args.mode, args.t, args.seed)
    pairs = self_join_positives(repo, cfg, pattern, strategy)
    pairs = augment_shuffle(pairs, cfg.r, cfg.seed, repo, pattern, strategy)
    batches, dropped = make_batches(pairs, cfg.batch_size, cfg.seed)

    with open(args.out, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(p.to_json() + "\n")
    if args.manifest:
        key_to_line = {id(p): i for i, p in enumerate(pairs)}
        manifest = {
            "batch_size": cfg.batch_size,
            "dropped": dropped,
            "batches": [[key_to_line[id(p)] for p in b.pairs] for b in batches],
        }
        Path(args.manifest).write_text(json.dumps(manifest, indent=2))
    n_aug = sum(1 for p in pairs if p.augmented)
    print(f"wrote {len(pairs)} pairs ({n_aug} augmented) to {args.out}; "
          f"{len(batches)} batches of {cfg.batch_size}, {dropped} dropped")
    return 0


def cmd_eval(args) -> int:
    exact = load_results_jsonl(args.exact)
    model = load_results_jsonl(args.model)
    ks = [int(k) for k in args.k.split(",")]

    jn_known = {(qid, cid): score for qid, ranked in exact.items()
                for cid, score in ranked}
    missing: set = set()

    def jn_fn(qid, cid):
        if (qid, cid) in jn_known:
            return jn_known[(qid, cid)]
        missing.add((qid, cid))
        return 0.0

    report = evaluate(exact, model, jn_fn, ks)
    if missing:
        logger.warning(
            "%d retrieved ids were outside the exact top-k lists; their "
            "joinability was taken as 0 for NDCG", len(missing))
    if args.pool:
        pool = load_label_pool(args.pool)
        report.pooled = pooled_prf({"model": model}, pool)
    if args.json:
        print(report.to_json())
    else:
        print(report.to_table())
    return 0


def cmd_bench(args) -> int:
    spec = bench.CorpusSpec.from_json(args.spec)
    report = bench.run_bench(spec, args.method, k=args.k, repeats=args.repeats,
                             seed=args.seed)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote report to {args.out}")
    else:
        print(text)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser(config: dict | None = None) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lakejoin",
        description="Joinable-column discovery over table repositories",
    )
    parser.add_argument("--config", help="key = value defaults file")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, budget=True):
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)
        if budget:
            p.add_argument("--pattern", default=DEFAULT_PATTERN.value)
            p.add_argument("--strategy", default="frequency",
                           help="frequency | random:<seed> | truncate")
            p.add_argument("--budget", type=int, default=512)

    p = sub.add_parser("ingest", help="extract key columns into a repository")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["csv", "tsv", "jsonl"], default="csv")
    p.add_argument("--key", default="maxdistinct",
                   help="explicit:<n> | maxdistinct")
    p.add_argument("--min-cells", type=int, default=5)
    p.add_argument("--out", required=True)
    common(p, budget=False)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("transform", help="render columns to text")
    p.add_argument("--repo", required=True)
    p.add_argument("--out")
    common(p)
    p.set_defaults(fn=cmd_transform)

    p = sub.add_parser("index", help="embed columns and build the ANN index")
    p.add_argument("--repo", required=True)
    p.add_argument("--embedder", default="hash:256:0",
                   help="hash:<dim>:<seed> | external:<host:port|command>")
    p.add_argument("--m", type=int, default=16)
    p.add_argument("--efc", type=int, default=200)
    p.add_argument("--efs", type=int, default=200)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(fn=cmd_index)

    p = sub.add_parser("search", help="top-k search over an index")
    p.add_argument("--method", choices=["ann", "minhash"], default="ann")
    p.add_argument("--index")
    p.add_argument("--repo")
    p.add_argument("--embedder", help="override the embedder stored in the index")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--efs", type=int, default=None)
    p.add_argument("--m-signature", type=int, default=256,
                   help="minhash signature length")
    p.add_argument("--queries", required=True)
    p.add_argument("--out")
    common(p, budget=False)
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("oracle", help="exact top-k ground truth")
    p.add_argument("--repo", required=True)
    p.add_argument("--mode", choices=["equi", "semantic"], default="equi")
    p.add_argument("--tau", type=float, default=0.9)
    p.add_argument("--cell-embedder", default="hash:32:0")
    p.add_argument("--pivots", type=int, default=8, help="0 disables pruning")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--queries", required=True)
    p.add_argument("--out")
    common(p, budget=False)
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("traingen", help="generate training pairs and batches")
    p.add_argument("--repo", required=True)
    p.add_argument("--mode", choices=["equi", "semantic"], default="equi")
    p.add_argument("--tau", type=float, default=0.9)
    p.add_argument("--cell-embedder", default="hash:32:0")
    p.add_argument("--t", type=float, default=0.7)
    p.add_argument("--r", type=float, default=0.2)
    p.add_argument("--N", type=int, default=32)
    p.add_argument("--sample-size", type=int, default=30000)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    common(p)
    p.set_defaults(fn=cmd_traingen)

    p = sub.add_parser("eval", help="score a model against the exact oracle")
    p.add_argument("--exact", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--k", default="10,20,30,40,50")
    p.add_argument("--pool")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="synthetic corpus + latency measurement")
    p.add_argument("--spec", required=True)
    p.add_argument("--method", choices=["oracle", "minhash", "ann"],
                   required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out")
    common(p, budget=False)
    p.set_defaults(fn=cmd_bench)

    if config:
        for sp in sub.choices.values():
            sp.set_defaults(**config)
    return parser


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    config = None
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        config = load_config(known.config)

    parser = build_parser(config)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.fn(args)
    except LakejoinError as exc:
        logger.error("%s", exc)
        return 2
    except FileNotFoundError as exc:
        logger.error("%s", exc)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
