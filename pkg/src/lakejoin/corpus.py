"""Column data model, table ingestion, and repository persistence.

A column is an ordered set of distinct non-empty cell strings plus table
metadata. A repository is an immutable, id-addressable collection of columns
together with the document frequency of every cell value (the number of
columns containing it). Comparison between cells is exact string equality;
cells are trimmed at ingestion but never case-folded.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence, Union

from lakejoin.errors import DuplicateColumnError, IngestError, RepositoryFormatError

logger = logging.getLogger(__name__)

REPO_MAGIC = b"LJN1"
REPO_VERSION = 1

# Columns shorter than this are dropped at ingestion; repositories built for
# tests may lower it via build_repository(min_cells=...).
MIN_CELLS = 5


@dataclass(frozen=True)
class Column:
    """One table column: distinct non-empty cells in first-occurrence order."""

    id: str
    cells: tuple[str, ...]
    table_title: str = ""
    column_name: str = ""
    table_context: str = ""

    def __post_init__(self):
        if not self.cells:
            raise ValueError(f"column {self.id!r} has no cells")

    @property
    def cell_set(self) -> frozenset[str]:
        return frozenset(self.cells)

    def __len__(self) -> int:
        return len(self.cells)


def clean_cells(raw: Iterable[str]) -> tuple[str, ...]:
    """Trim, drop empties, dedup keeping first occurrence."""
    seen = set()
    out = []
    for cell in raw:
        cell = cell.strip()
        if not cell or cell in seen:
            continue
        seen.add(cell)
        out.append(cell)
    return tuple(out)


def make_column(
    id: str,
    raw_cells: Iterable[str],
    table_title: str = "",
    column_name: str = "",
    table_context: str = "",
) -> Column | None:
    """Build a Column from raw cells; None when nothing survives cleaning."""
    cells = clean_cells(raw_cells)
    if not cells:
        return None
    return Column(
        id=id,
        cells=cells,
        table_title=table_title,
        column_name=column_name,
        table_context=table_context,
    )


@dataclass(frozen=True)
class TableSource:
    """Parsed rectangular table plus optional metadata."""

    name: str
    header: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]
    title: str = ""
    context: str = ""

    def __post_init__(self):
        width = len(self.header)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise IngestError(
                    f"{self.name}: row {i + 1} has {len(row)} fields, expected {width}"
                )

    def column_values(self, index: int) -> list[str]:
        return [row[index] for row in self.rows]


@dataclass(frozen=True)
class ExplicitIndex:
    """Select the column at a fixed 0-based position."""

    index: int


class MaxDistinct:
    """Select the column with the most distinct non-empty values."""

    def __repr__(self):
        return "MaxDistinct()"


KeySelector = Union[ExplicitIndex, MaxDistinct]


def parse_csv(
    path_or_file,
    name: str | None = None,
    delimiter: str = ",",
) -> TableSource:
    """Parse a delimited file (RFC-4180 quoting) into a TableSource.

    Lines of the form ``#title: ...`` / ``#context: ...`` before the header
    row carry table metadata.
    """
    if isinstance(path_or_file, (str, Path)):
        name = name or Path(path_or_file).stem
        fh = open(path_or_file, "r", encoding="utf-8", newline="")
        close = True
    else:
        name = name or "<stream>"
        fh = path_or_file
        close = False
    try:
        title = ""
        context = ""
        body = []
        for line in fh:
            stripped = line.lstrip()
            if not body and stripped.startswith("#"):
                tag, _, value = stripped[1:].partition(":")
                tag = tag.strip().lower()
                if tag == "title":
                    title = value.strip()
                elif tag == "context":
                    context = value.strip()
                continue
            body.append(line)
        if not body:
            raise IngestError(f"{name}: no header row")
        reader = csv.reader(io.StringIO("".join(body)), delimiter=delimiter)
        try:
            records = [tuple(r) for r in reader]
        except csv.Error as exc:
            raise IngestError(f"{name}: {exc}") from exc
        header = records[0]
        return TableSource(
            name=name,
            header=header,
            rows=tuple(records[1:]),
            title=title,
            context=context,
        )
    finally:
        if close:
            fh.close()


def ingest_table(
    src: TableSource,
    key_selector: KeySelector,
    min_cells: int = MIN_CELLS,
) -> list[Column]:
    """Extract the key column of a table as a Column.

    Returns an empty list (with a logged warning) when the selected column
    has fewer than `min_cells` distinct non-empty values.
    """
    ncols = len(src.header)
    if ncols == 0:
        raise IngestError(f"{src.name}: table has no columns")

    if isinstance(key_selector, ExplicitIndex):
        if not 0 <= key_selector.index < ncols:
            raise IngestError(
                f"{src.name}: column index {key_selector.index} out of bounds "
                f"(table has {ncols} columns)"
            )
        chosen = key_selector.index
    elif isinstance(key_selector, MaxDistinct):
        distinct = [len(clean_cells(src.column_values(i))) for i in range(ncols)]
        chosen = max(range(ncols), key=lambda i: (distinct[i], -i))
    else:
        raise TypeError(f"unsupported key selector: {key_selector!r}")

    col = make_column(
        id=f"{src.name}#c{chosen}",
        raw_cells=src.column_values(chosen),
        table_title=src.title,
        column_name=src.header[chosen],
        table_context=src.context,
    )
    if col is None or len(col) < min_cells:
        logger.warning(
            "%s: selected column %d has %d distinct cells (< %d), skipped",
            src.name, chosen, 0 if col is None else len(col), min_cells,
        )
        return []
    return [col]


class Repository:
    """Immutable collection of columns with exact document frequencies."""

    def __init__(self, columns: Sequence[Column]):
        by_id: dict[str, Column] = {}
        for col in columns:
            if col.id in by_id:
                raise DuplicateColumnError(f"duplicate column id {col.id!r}")
            by_id[col.id] = col
        self._columns = by_id
        df: Counter[str] = Counter()
        for col in by_id.values():
            df.update(col.cell_set)
        self._doc_freq = dict(df)

    @property
    def doc_freq(self) -> Mapping[str, int]:
        return self._doc_freq

    def df(self, cell: str) -> int:
        return self._doc_freq.get(cell, 0)

    def __len__(self) -> int:
        return len(self._columns)

    def __contains__(self, column_id: str) -> bool:
        return column_id in self._columns

    def __iter__(self) -> Iterator[Column]:
        return iter(self._columns.values())

    def __getitem__(self, column_id: str) -> Column:
        return self._columns[column_id]

    def ids(self) -> list[str]:
        return list(self._columns.keys())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Repository):
            return NotImplemented
        return self._columns == other._columns


def build_repository(cols: Iterable[Column], min_cells: int = MIN_CELLS) -> Repository:
    admitted = []
    for col in cols:
        if len(col) < min_cells:
            logger.warning("column %r has %d cells (< %d), not admitted",
                           col.id, len(col), min_cells)
            continue
        admitted.append(col)
    return Repository(admitted)


# ---------------------------------------------------------------------------
# Persistence: length-prefixed binary. Strings are u32-length utf-8; doc_freq
# is recomputed on load so the file stays small and can never go stale.
# ---------------------------------------------------------------------------


def _write_str(fh, s: str) -> None:
    raw = s.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _read_exact(fh, n: int) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise RepositoryFormatError("unexpected end of file")
    return raw


def _read_str(fh) -> str:
    (n,) = struct.unpack("<I", _read_exact(fh, 4))
    return _read_exact(fh, n).decode("utf-8")


def save_repository(repo: Repository, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(REPO_MAGIC)
        fh.write(struct.pack("<HI", REPO_VERSION, len(repo)))
        for col in repo:
            _write_str(fh, col.id)
            _write_str(fh, col.table_title)
            _write_str(fh, col.column_name)
            _write_str(fh, col.table_context)
            fh.write(struct.pack("<I", len(col.cells)))
            for cell in col.cells:
                _write_str(fh, cell)


def load_repository(path: str | Path) -> Repository:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != REPO_MAGIC:
            raise RepositoryFormatError(
                f"{path}: bad magic {magic!r}, expected {REPO_MAGIC!r}"
            )
        version, n = struct.unpack("<HI", _read_exact(fh, 6))
        if version != REPO_VERSION:
            raise RepositoryFormatError(
                f"{path}: unsupported repository version {version}"
            )
        cols = []
        for _ in range(n):
            cid = _read_str(fh)
            title = _read_str(fh)
            colname = _read_str(fh)
            context = _read_str(fh)
            (ncells,) = struct.unpack("<I", _read_exact(fh, 4))
            cells = tuple(_read_str(fh) for _ in range(ncells))
            cols.append(Column(
                id=cid, cells=cells, table_title=title,
                column_name=colname, table_context=context,
            ))
        if fh.read(1):
            raise RepositoryFormatError(f"{path}: trailing bytes after payload")
    # admission already happened before save; do not re-filter on load
    return Repository(cols)


# ---------------------------------------------------------------------------
# JSON-lines column format: {"id", "table_title", "column_name",
# "table_context", "cells"} per line.
# ---------------------------------------------------------------------------


def parse_jsonl_columns(path_or_file, min_cells: int = 1) -> list[Column]:
    if isinstance(path_or_file, (str, Path)):
        fh = open(path_or_file, "r", encoding="utf-8")
        close = True
    else:
        fh = path_or_file
        close = False
    cols = []
    try:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"line {lineno}: invalid JSON: {exc}") from exc
            if "id" not in obj or "cells" not in obj:
                raise IngestError(f"line {lineno}: missing 'id' or 'cells'")
            col = make_column(
                id=str(obj["id"]),
                raw_cells=[str(c) for c in obj["cells"]],
                table_title=str(obj.get("table_title", "")),
                column_name=str(obj.get("column_name", "")),
                table_context=str(obj.get("table_context", "")),
            )
            if col is None or len(col) < min_cells:
                logger.warning("line %d: column %r too short, skipped",
                               lineno, obj.get("id"))
                continue
            cols.append(col)
    finally:
        if close:
            fh.close()
    return cols


def column_to_json(col: Column) -> str:
    return json.dumps({
        "id": col.id,
        "table_title": col.table_title,
        "column_name": col.column_name,
        "table_context": col.table_context,
        "cells": list(col.cells),
    }, ensure_ascii=False)
