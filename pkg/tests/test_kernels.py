"""Backend agreement: the compiled kernels and the pure-Python fallback must
produce identical ids and near-identical floats on the same inputs."""

import os
import subprocess
import sys

import numpy as np
import pytest

from lakejoin import kernels
from lakejoin.hashing import splitmix64_array
from lakejoin.kernels import _kernels_py as pyk

try:
    from lakejoin.kernels import _kernels as cyk
except ImportError:
    cyk = None

BACKENDS = [pyk] + ([cyk] if cyk is not None else [])


@pytest.fixture
def graph(rng):
    n, dim, deg_n = 300, 24, 10
    vecs = rng.standard_normal((n, dim)).astype(np.float32)
    adj = np.zeros((n, deg_n + 1), dtype=np.int32)
    deg = np.full(n, deg_n, dtype=np.int32)
    for i in range(n):
        others = [j for j in rng.choice(n, deg_n + 1, replace=False) if j != i]
        adj[i, :deg_n] = others[:deg_n]
    return vecs, adj, deg


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit("_", 1)[-1])
class TestEachBackend:
    def test_minhash_matches_direct_formula(self, impl, rng):
        hashes = rng.integers(0, 2**64, 30, dtype=np.uint64)
        a = splitmix64_array(5, 16) | np.uint64(1)
        b = splitmix64_array(6, 16)
        got = impl.minhash_signature(hashes, a, b)
        with np.errstate(over="ignore"):
            want = np.array([
                min((int(a[i]) * int(x) + int(b[i])) % 2**64 for x in hashes)
                for i in range(16)
            ], dtype=np.uint64)
        assert (got == want).all()

    def test_count_equal(self, impl):
        s1 = np.array([1, 2, 3, 4], dtype=np.uint64)
        s2 = np.array([1, 9, 3, 8], dtype=np.uint64)
        assert impl.count_equal(s1, s2) == 2

    def test_sorted_overlap_offsets(self, impl):
        a = np.array([1, 3, 5, 7, 9], dtype=np.int64)
        b = np.array([3, 4, 5, 6, 7], dtype=np.int64)
        assert impl.sorted_overlap(a, b) == 3
        assert impl.sorted_overlap(a, b, 2, 0) == 2  # drops the 3
        assert impl.sorted_overlap(a, b, 0, 3) == 1  # only 7 remains

    def test_search_layer_finds_reachable_nearest(self, impl, graph, rng):
        vecs, adj, deg = graph
        q = rng.standard_normal(24).astype(np.float32)
        visited = np.zeros(300, dtype=np.int32)
        ids, dists = impl.search_layer(vecs, adj, deg,
                                       np.array([0], dtype=np.int64),
                                       q, 300, visited, 1)
        # beam as wide as the graph must visit everything reachable; this
        # random graph is connected with overwhelming probability
        assert len(ids) == 300
        assert list(dists) == sorted(dists)

    def test_select_neighbors_caps_output(self, impl, graph, rng):
        vecs, _, _ = graph
        cand = np.arange(50, dtype=np.int64)
        q = vecs[0].astype(np.float64)
        dists = np.linalg.norm(vecs[:50].astype(np.float64) - q, axis=1)
        order = np.lexsort((cand, dists))
        out = impl.select_neighbors(vecs, cand[order], dists[order], 8)
        assert out.shape[0] == 8
        assert len(set(out.tolist())) == 8


@pytest.fixture
def lattice_graph(rng):
    """Integer-valued vectors: every pairwise distance is exact in float64,
    so numpy's reduction order and the C loops must agree bit-for-bit and
    any divergence is an algorithm bug, not float rounding."""
    n, dim, deg_n = 300, 24, 10
    vecs = rng.integers(-3, 4, size=(n, dim)).astype(np.float32)
    adj = np.zeros((n, deg_n + 1), dtype=np.int32)
    deg = np.full(n, deg_n, dtype=np.int32)
    for i in range(n):
        others = [j for j in rng.choice(n, deg_n + 1, replace=False) if j != i]
        adj[i, :deg_n] = others[:deg_n]
    return vecs, adj, deg


@pytest.mark.skipif(cyk is None, reason="compiled kernels not built")
class TestBackendAgreement:
    def test_minhash_identical(self, rng):
        hashes = rng.integers(0, 2**64, 500, dtype=np.uint64)
        a = splitmix64_array(1, 256) | np.uint64(1)
        b = splitmix64_array(2, 256)
        assert (cyk.minhash_signature(hashes, a, b)
                == pyk.minhash_signature(hashes, a, b)).all()

    def test_search_layer_identical(self, lattice_graph, rng):
        vecs, adj, deg = lattice_graph
        for trial in range(20):
            q = rng.integers(-3, 4, size=24).astype(np.float32)
            entries = np.array([int(rng.integers(0, 300))], dtype=np.int64)
            v1 = np.zeros(300, dtype=np.int32)
            v2 = np.zeros(300, dtype=np.int32)
            i1, d1 = cyk.search_layer(vecs, adj, deg, entries, q, 20, v1, 1)
            i2, d2 = pyk.search_layer(vecs, adj, deg, entries, q, 20, v2, 1)
            assert (i1 == i2).all()
            assert (d1 == d2).all()

    def test_select_neighbors_identical(self, lattice_graph, rng):
        vecs, _, _ = lattice_graph
        for trial in range(10):
            cand = rng.choice(300, 40, replace=False).astype(np.int64)
            q = vecs[int(rng.integers(0, 300))].astype(np.float64)
            dists = np.linalg.norm(vecs[cand].astype(np.float64) - q, axis=1)
            order = np.lexsort((cand, dists))
            s1 = cyk.select_neighbors(vecs, cand[order], dists[order], 12)
            s2 = pyk.select_neighbors(vecs, cand[order], dists[order], 12)
            assert (s1 == s2).all()


def test_pure_python_fallback_selected_by_env():
    code = (
        "from lakejoin import kernels; import numpy as np; "
        "from lakejoin.ann import build, HnswParams; "
        "assert kernels.BACKEND == 'python', kernels.BACKEND; "
        "rng = np.random.default_rng(0); "
        "v = rng.standard_normal((50, 8)).astype(np.float32); "
        "v /= np.linalg.norm(v, axis=1, keepdims=True); "
        "idx = build([(f'v{i}', v[i]) for i in range(50)], "
        "HnswParams(m=4, ef_construction=16)); "
        "r = idx.knn(v[7], 1); "
        "assert r[0][0] == 'v7', r"
    )
    env = dict(os.environ, LAKEJOIN_PURE_PYTHON="1")
    subprocess.run([sys.executable, "-c", code], check=True, env=env)


def test_default_backend_reported():
    assert kernels.BACKEND in ("cython", "python")
