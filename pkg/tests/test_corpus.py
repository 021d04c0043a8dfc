import io
import json
from collections import Counter

import numpy as np
import pytest

from lakejoin.corpus import (
    Column,
    ExplicitIndex,
    MaxDistinct,
    Repository,
    TableSource,
    build_repository,
    clean_cells,
    column_to_json,
    ingest_table,
    load_repository,
    make_column,
    parse_csv,
    parse_jsonl_columns,
    save_repository,
)
from lakejoin.errors import DuplicateColumnError, IngestError, RepositoryFormatError

from conftest import random_column


class TestCleanCells:
    def test_dedup_keeps_first_occurrence(self):
        assert clean_cells(["b", "a", "b", "c", "a"]) == ("b", "a", "c")

    def test_drops_empty_and_whitespace(self):
        assert clean_cells(["a", "", "  ", "b"]) == ("a", "b")

    def test_trims_surrounding_whitespace(self):
        assert clean_cells([" a ", "a"]) == ("a",)

    def test_idempotent(self, rng):
        cells = [f"v{i}" for i in rng.integers(0, 100, size=80)]
        once = clean_cells(cells)
        assert clean_cells(once) == once

    def test_case_sensitive(self):
        assert clean_cells(["GE", "ge"]) == ("GE", "ge")


class TestIngest:
    def _two_col_source(self):
        return TableSource(
            name="t",
            header=("k", "v"),
            rows=(("x1", "a"), ("x2", "a"), ("x3", "b"), ("x4", "a"), ("x5", "b")),
        )

    def test_short_column_rejected(self):
        src = TableSource(name="t", header=("c",),
                          rows=(("a",), ("a",), ("b",), ("",)))
        assert ingest_table(src, ExplicitIndex(0)) == []

    def test_max_distinct_selection(self):
        cols = ingest_table(self._two_col_source(), MaxDistinct())
        assert len(cols) == 1
        assert cols[0].cells == ("x1", "x2", "x3", "x4", "x5")
        assert cols[0].column_name == "k"

    def test_explicit_out_of_bounds(self):
        with pytest.raises(IngestError):
            ingest_table(self._two_col_source(), ExplicitIndex(2))

    def test_ragged_rows_rejected(self):
        with pytest.raises(IngestError):
            TableSource(name="t", header=("a", "b"), rows=(("1",),))

    def test_dedup_matches_set_build(self, rng):
        # oracle: a plain set build over the raw values
        raw = [f"v{i}" for i in rng.integers(0, 12, size=60)]
        src = TableSource(name="t", header=("c",),
                          rows=tuple((v,) for v in raw))
        cols = ingest_table(src, ExplicitIndex(0), min_cells=1)
        assert set(cols[0].cells) == set(v for v in raw if v)
        assert len(cols[0].cells) == len(set(raw))

    def test_csv_parse_with_metadata_and_quoting(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text('#title: My table\n#context: about things\n'
                     'name,place\n"Smith, J",NY\nJones,LA\n')
        src = parse_csv(p)
        assert src.title == "My table"
        assert src.context == "about things"
        assert src.rows[0] == ("Smith, J", "NY")


class TestRepository:
    def test_doc_freq_shared_value(self):
        a = Column(id="a", cells=("GE", "x1", "x2", "x3", "x4"))
        b = Column(id="b", cells=("GE", "y1", "y2", "y3", "y4"))
        repo = build_repository([a, b])
        assert repo.df("GE") == 2
        assert repo.df("x1") == 1
        assert repo.df("nope") == 0

    def test_empty(self):
        repo = build_repository([])
        assert len(repo) == 0
        assert dict(repo.doc_freq) == {}

    def test_duplicate_id(self):
        a = Column(id="a", cells=tuple(f"x{i}" for i in range(5)))
        with pytest.raises(DuplicateColumnError):
            Repository([a, a])

    def test_doc_freq_matches_recount(self, rng):
        cols = [random_column(rng, f"c{i}", vocab=60) for i in range(100)]
        repo = Repository(cols)
        recount = Counter()
        for col in cols:
            for cell in set(col.cells):
                recount[cell] += 1
        assert dict(repo.doc_freq) == dict(recount)

    def test_min_cells_admission(self):
        short = Column(id="s", cells=("a", "b"))
        repo = build_repository([short])
        assert len(repo) == 0
        repo = build_repository([short], min_cells=1)
        assert len(repo) == 1


class TestPersistence:
    def test_round_trip_empty(self, tmp_path):
        repo = build_repository([])
        path = tmp_path / "r.ljn"
        save_repository(repo, path)
        assert load_repository(path) == repo

    def test_round_trip_random(self, rng, tmp_path):
        cols = [random_column(rng, f"c{i}") for i in range(100)]
        repo = Repository(cols)
        path = tmp_path / "r.ljn"
        save_repository(repo, path)
        loaded = load_repository(path)
        assert loaded == repo
        assert dict(loaded.doc_freq) == dict(repo.doc_freq)
        col = cols[17]
        got = loaded[col.id]
        assert got.cells == col.cells
        assert got.table_title == col.table_title
        assert got.column_name == col.column_name
        assert got.table_context == col.table_context

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.ljn"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(RepositoryFormatError):
            load_repository(path)

    def test_truncated_file(self, rng, tmp_path):
        cols = [random_column(rng, f"c{i}") for i in range(5)]
        path = tmp_path / "r.ljn"
        save_repository(Repository(cols), path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(RepositoryFormatError):
            load_repository(path)


class TestJsonl:
    def test_round_trip(self):
        col = Column(id="a", cells=("x1", "x2", "x3", "x4", "x5"),
                     table_title="T", column_name="c", table_context="ctx")
        line = column_to_json(col)
        parsed = parse_jsonl_columns(io.StringIO(line + "\n"))
        assert parsed == [col]

    def test_missing_fields(self):
        with pytest.raises(IngestError):
            parse_jsonl_columns(io.StringIO(json.dumps({"id": "a"}) + "\n"))

    def test_bad_json(self):
        with pytest.raises(IngestError):
            parse_jsonl_columns(io.StringIO("{not json\n"))


def test_make_column_empty_returns_none():
    assert make_column("x", ["", "  "]) is None
