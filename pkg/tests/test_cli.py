import json

import pytest

from lakejoin.cli import run
from lakejoin.corpus import Column, Repository, column_to_json, save_repository
from lakejoin.evalkit import load_results_jsonl
from lakejoin.oracle import EquiIndex

from conftest import random_column, random_repository


@pytest.fixture
def corpus_files(rng, tmp_path):
    repo = random_repository(rng, 60, vocab=150)
    repo_path = tmp_path / "repo.ljn"
    save_repository(repo, repo_path)
    queries = [random_column(rng, f"q{i}", vocab=150) for i in range(5)]
    q_path = tmp_path / "queries.jsonl"
    q_path.write_text("".join(column_to_json(q) + "\n" for q in queries))
    return repo, repo_path, queries, q_path


def test_help_exits_zero(capsys):
    assert run(["--help"]) == 0
    assert "lakejoin" in capsys.readouterr().out


def test_unknown_flag_nonzero():
    assert run(["oracle", "--nope"]) != 0


def test_missing_subcommand_nonzero():
    assert run([]) != 0


def test_ingest_csv_roundtrip(tmp_path):
    table = tmp_path / "t.csv"
    table.write_text("#title: Things\nname,code\n" +
                     "".join(f"name{i},c{i}\n" for i in range(8)))
    out = tmp_path / "repo.ljn"
    assert run(["ingest", "--input", str(table), "--format", "csv",
                "--key", "explicit:0", "--out", str(out)]) == 0
    from lakejoin.corpus import load_repository
    repo = load_repository(out)
    assert len(repo) == 1
    col = next(iter(repo))
    assert col.table_title == "Things"
    assert col.column_name == "name"


def test_ingest_jsonl(tmp_path, rng):
    cols = [random_column(rng, f"c{i}") for i in range(4)]
    src = tmp_path / "cols.jsonl"
    src.write_text("".join(column_to_json(c) + "\n" for c in cols))
    out = tmp_path / "repo.ljn"
    assert run(["ingest", "--input", str(src), "--format", "jsonl",
                "--out", str(out)]) == 0
    from lakejoin.corpus import load_repository
    assert len(load_repository(out)) == 4


def test_transform_emits_jsonl(corpus_files, tmp_path):
    _, repo_path, _, _ = corpus_files
    out = tmp_path / "texts.jsonl"
    assert run(["transform", "--repo", str(repo_path),
                "--pattern", "colname-col", "--budget", "64",
                "--out", str(out)]) == 0
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert len(lines) == 60
    assert all({"id", "text", "truncated"} <= set(l) for l in lines)


def test_oracle_and_search_pipeline(corpus_files, tmp_path):
    repo, repo_path, queries, q_path = corpus_files

    oracle_out = tmp_path / "oracle.jsonl"
    assert run(["oracle", "--repo", str(repo_path), "--mode", "equi",
                "--k", "5", "--queries", str(q_path),
                "--out", str(oracle_out)]) == 0
    got = load_results_jsonl(oracle_out)
    index = EquiIndex(repo)
    for q in queries:  # golden check against an in-process oracle run
        assert got[q.id] == index.topk(q, 5)

    idx_path = tmp_path / "idx.ljh"
    assert run(["index", "--repo", str(repo_path), "--embedder", "hash:64:0",
                "--pattern", "col", "--out", str(idx_path)]) == 0

    search_out = tmp_path / "ann.jsonl"
    assert run(["search", "--index", str(idx_path), "--repo", str(repo_path),
                "--k", "5", "--queries", str(q_path),
                "--out", str(search_out)]) == 0
    ann_results = load_results_jsonl(search_out)
    assert set(ann_results) == {q.id for q in queries}
    assert all(len(v) == 5 for v in ann_results.values())

    minhash_out = tmp_path / "mh.jsonl"
    assert run(["search", "--method", "minhash", "--repo", str(repo_path),
                "--k", "5", "--queries", str(q_path),
                "--out", str(minhash_out)]) == 0

    # eval consumes the two files
    assert run(["eval", "--exact", str(oracle_out), "--model", str(search_out),
                "--k", "1,5"]) == 0


def test_semantic_oracle_cli(corpus_files, tmp_path):
    _, repo_path, _, q_path = corpus_files
    out = tmp_path / "sem.jsonl"
    assert run(["oracle", "--repo", str(repo_path), "--mode", "semantic",
                "--tau", "0.9", "--cell-embedder", "hash:16:0",
                "--k", "3", "--queries", str(q_path), "--out", str(out)]) == 0
    assert len(load_results_jsonl(out)) == 5


def test_traingen_cli(tmp_path, rng):
    # overlapping columns so positives exist
    base = [f"v{i}" for i in range(10)]
    cols = [Column(id=f"c{i}", cells=tuple(base[:6] + [f"u{i}{j}" for j in range(2)]))
            for i in range(10)]
    repo_path = tmp_path / "repo.ljn"
    save_repository(Repository(cols), repo_path)
    out = tmp_path / "train.jsonl"
    manifest = tmp_path / "batches.json"
    assert run(["traingen", "--repo", str(repo_path), "--mode", "equi",
                "--t", "0.5", "--r", "0.2", "--N", "4",
                "--out", str(out), "--manifest", str(manifest)]) == 0
    pairs = [json.loads(l) for l in out.read_text().splitlines()]
    assert pairs
    man = json.loads(manifest.read_text())
    for batch in man["batches"]:
        ys = [pairs[i]["y_id"] for i in batch]
        assert len(set(ys)) == len(ys) == man["batch_size"]


def test_bench_cli(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"n_columns": 20, "n_queries": 3, "seed": 1}))
    out = tmp_path / "report.json"
    assert run(["bench", "--spec", str(spec), "--method", "minhash",
                "--k", "3", "--repeats", "1", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["info"]["method"] == "minhash"


def test_config_file_sets_defaults(corpus_files, tmp_path):
    _, repo_path, _, _ = corpus_files
    cfg = tmp_path / "lakejoin.conf"
    cfg.write_text("pattern = col\nbudget = 8  # tiny budget\n")
    out = tmp_path / "texts.jsonl"
    assert run(["--config", str(cfg), "transform", "--repo", str(repo_path),
                "--out", str(out)]) == 0
    # budget 32 forces truncation on wide columns; pattern col has no metadata
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert any(l["truncated"] for l in lines)
    assert all(":" not in l["text"].split(",")[0] for l in lines)
