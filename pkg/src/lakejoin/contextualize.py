"""Column-to-text rendering.

Seven patterns turn a column plus its metadata into one text sequence. When
the full rendering would blow past the embedder's token budget, the cell list
is first replaced by a sample (most-frequent-first by document frequency,
seeded-random, or head truncation) whose rendering fits the budget. Tokens
here are whitespace tokens; an attached external embedder may count tokens
differently and can override the budget through its handshake.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Literal, Mapping, Sequence

import numpy as np

from lakejoin.corpus import Column
from lakejoin.errors import EmptyColumnError


class Pattern(enum.Enum):
    COL = "col"
    COLNAME_COL = "colname-col"
    COLNAME_COL_CONTEXT = "colname-col-context"
    COLNAME_STAT_COL = "colname-stat-col"
    TITLE_COLNAME_COL = "title-colname-col"
    TITLE_COLNAME_COL_CONTEXT = "title-colname-col-context"
    TITLE_COLNAME_STAT_COL = "title-colname-stat-col"

    @classmethod
    def from_name(cls, name: str) -> "Pattern":
        for p in cls:
            if p.value == name:
                return p
        raise ValueError(f"unknown pattern {name!r}; choose from "
                         + ", ".join(p.value for p in cls))


DEFAULT_PATTERN = Pattern.TITLE_COLNAME_STAT_COL


@dataclass(frozen=True)
class ColumnStats:
    """Distinct-cell count and cell-length extrema/mean."""

    n: int
    max_len: int
    min_len: int
    avg_len: float

    def render(self) -> str:
        return f"{self.n} values ({self.max_len}, {self.min_len}, {self.avg_len:.1f})"


def compute_stats(col: Column, mode: Literal["chars", "words"] = "chars") -> ColumnStats:
    """Cell-length statistics. Lengths are character counts by default; the
    "words" mode counts whitespace tokens instead."""
    if not col.cells:
        raise EmptyColumnError(f"column {col.id!r} has no cells")
    if mode == "chars":
        lengths = [len(c) for c in col.cells]
    elif mode == "words":
        lengths = [len(c.split()) for c in col.cells]
    else:
        raise ValueError(f"unknown stats mode {mode!r}")
    return ColumnStats(
        n=len(col.cells),
        max_len=max(lengths),
        min_len=min(lengths),
        avg_len=sum(lengths) / len(lengths),
    )


@dataclass(frozen=True)
class SampleStrategy:
    """How to shrink a tall column: kind is one of frequency / random /
    truncate; token_budget is the embedder's max sequence length."""

    kind: Literal["frequency", "random", "truncate"] = "frequency"
    token_budget: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("frequency", "random", "truncate"):
            raise ValueError(f"unknown sampling kind {self.kind!r}")
        if self.token_budget < 8:
            raise ValueError("token_budget must be >= 8")

    @classmethod
    def frequency(cls, token_budget: int = 512) -> "SampleStrategy":
        return cls("frequency", token_budget)

    @classmethod
    def random(cls, seed: int, token_budget: int = 512) -> "SampleStrategy":
        return cls("random", token_budget, seed)

    @classmethod
    def truncate(cls, token_budget: int = 512) -> "SampleStrategy":
        return cls("truncate", token_budget)

    @classmethod
    def parse(cls, text: str, token_budget: int = 512) -> "SampleStrategy":
        """Parse CLI syntax: frequency | random:<seed> | truncate."""
        kind, _, arg = text.partition(":")
        if kind == "random":
            return cls("random", token_budget, int(arg) if arg else 0)
        return cls(kind, token_budget)


@dataclass(frozen=True)
class ColumnText:
    text: str
    pattern: Pattern
    truncated: bool


def token_count(text: str) -> int:
    return len(text.split())


def sample(
    cells: Sequence[str],
    strategy: SampleStrategy,
    doc_freq: Mapping[str, int],
    budget: int,
) -> list[str]:
    """Pick a prefix of the strategy's cell order whose total whitespace-token
    count stays within `budget`; cells already within budget pass unchanged.

    If even the first cell is over budget it is cut down to `budget` tokens so
    the result is never empty.
    """
    if budget < 1:
        budget = 1
    cells = list(cells)
    if sum(token_count(c) for c in cells) <= budget:
        return cells

    if strategy.kind == "frequency":
        order = sorted(range(len(cells)),
                       key=lambda i: (-doc_freq.get(cells[i], 0), i))
    elif strategy.kind == "random":
        rng = np.random.default_rng(strategy.seed)
        order = list(rng.permutation(len(cells)))
    else:
        order = list(range(len(cells)))

    picked: list[str] = []
    used = 0
    for i in order:
        t = token_count(cells[i])
        if used + t > budget:
            break
        picked.append(cells[i])
        used += t
    if not picked:
        first = cells[order[0]]
        picked = [" ".join(first.split()[:budget])]
    return picked


def _compose(col: Column, pattern: Pattern, cells: Sequence[str],
             stats: ColumnStats) -> str:
    """Assemble the text for `pattern` from an explicit cell list.

    Empty metadata fields degrade gracefully: a missing title drops the
    leading "<title>. ", a missing column name falls back to the bare cell
    list, a missing context drops the trailing " <context>".
    """
    col_part = ", ".join(cells)

    def colname_col() -> str:
        if not col.column_name:
            return col_part + "."
        return f"{col.column_name} : {col_part}."

    def colname_stat_col() -> str:
        stat = stats.render()
        if not col.column_name:
            return f"contains {stat}: {col_part}."
        return f"{col.column_name} contains {stat}: {col_part}."

    def with_title(body: str) -> str:
        return f"{col.table_title}. {body}" if col.table_title else body

    def with_context(body: str) -> str:
        return f"{body} {col.table_context}" if col.table_context else body

    if pattern is Pattern.COL:
        return col_part
    if pattern is Pattern.COLNAME_COL:
        return colname_col()
    if pattern is Pattern.COLNAME_COL_CONTEXT:
        return with_context(colname_col())
    if pattern is Pattern.COLNAME_STAT_COL:
        return colname_stat_col()
    if pattern is Pattern.TITLE_COLNAME_COL:
        return with_title(colname_col())
    if pattern is Pattern.TITLE_COLNAME_COL_CONTEXT:
        return with_context(with_title(colname_col()))
    if pattern is Pattern.TITLE_COLNAME_STAT_COL:
        return with_title(colname_stat_col())
    raise ValueError(f"unhandled pattern {pattern!r}")


def render(
    col: Column,
    pattern: Pattern = DEFAULT_PATTERN,
    strategy: SampleStrategy | None = None,
    doc_freq: Mapping[str, int] | None = None,
    stats_mode: Literal["chars", "words"] = "chars",
) -> ColumnText:
    """Render a column as one text sequence.

    Stats (for the *stat* patterns) always describe the full column, even when
    the cell list gets sampled down to fit the token budget.
    """
    if strategy is None:
        strategy = SampleStrategy.frequency()
    if doc_freq is None:
        doc_freq = {}
    stats = compute_stats(col, mode=stats_mode)

    text = _compose(col, pattern, col.cells, stats)
    if token_count(text) <= strategy.token_budget:
        return ColumnText(text=text, pattern=pattern, truncated=False)

    # Overhead of everything around the cell list: render with a one-token
    # placeholder and subtract it back out.
    overhead = token_count(_compose(col, pattern, ["x"], stats)) - 1
    cell_budget = strategy.token_budget - overhead
    picked = sample(col.cells, strategy, doc_freq, cell_budget)
    return ColumnText(
        text=_compose(col, pattern, picked, stats),
        pattern=pattern,
        truncated=True,
    )
