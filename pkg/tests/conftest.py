import numpy as np
import pytest

from lakejoin.corpus import Column, Repository


def random_column(rng: np.random.Generator, cid: str, vocab: int = 500,
                  min_cells: int = 5, max_cells: int = 30,
                  prefix: str = "w") -> Column:
    n = int(rng.integers(min_cells, max_cells + 1))
    values = rng.choice(vocab, size=n, replace=False)
    return Column(
        id=cid,
        cells=tuple(f"{prefix}{v}" for v in values),
        table_title=f"table {cid}",
        column_name=f"col_{cid}",
        table_context=f"context for {cid}",
    )


def random_repository(rng: np.random.Generator, n_columns: int,
                      vocab: int = 500, min_cells: int = 5,
                      max_cells: int = 30) -> Repository:
    cols = [random_column(rng, f"c{i:04d}", vocab, min_cells, max_cells)
            for i in range(n_columns)]
    return Repository(cols)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
