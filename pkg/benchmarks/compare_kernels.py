#!/usr/bin/env python3
"""Compare the compiled kernels against the pure-Python fallback.

Times the three hot paths (MinHash signatures, HNSW layer search on a built
index, end-to-end index build) with both backends and prints the speedups.

    python benchmarks/compare_kernels.py [--n-vectors 5000] [--dim 64]
"""

import argparse
import time

import numpy as np

from lakejoin.hashing import splitmix64_array
from lakejoin.kernels import _kernels_py as pyk

try:
    from lakejoin.kernels import _kernels as cyk
except ImportError:
    cyk = None


def timeit(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_minhash(impl, rng, n_cells=2000, m=512, rounds=20):
    hashes = rng.integers(0, 2**64, n_cells, dtype=np.uint64)
    a = splitmix64_array(1, m) | np.uint64(1)
    b = splitmix64_array(2, m)

    def run():
        for _ in range(rounds):
            impl.minhash_signature(hashes, a, b)

    return timeit(run) / rounds


def build_graph(rng, n, dim, deg_n=16):
    vecs = rng.standard_normal((n, dim)).astype(np.float32)
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    adj = np.zeros((n, deg_n + 1), dtype=np.int32)
    deg = np.full(n, deg_n, dtype=np.int32)
    for i in range(n):
        nbrs = rng.choice(n, deg_n + 1, replace=False)
        adj[i, :deg_n] = [j for j in nbrs if j != i][:deg_n]
    return vecs, adj, deg


def bench_search_layer(impl, rng, n, dim, queries=200, ef=100):
    vecs, adj, deg = build_graph(rng, n, dim)
    qs = rng.standard_normal((queries, dim)).astype(np.float32)
    visited = np.zeros(n, dtype=np.int32)
    entry = np.array([0], dtype=np.int64)

    def run():
        for stamp, q in enumerate(qs, start=1):
            impl.search_layer(vecs, adj, deg, entry, q, ef, visited, stamp)

    t = timeit(run, repeats=3)
    visited.fill(0)
    return t / queries


def bench_build(backend_env, n, dim):
    # separate process so the import-time backend selection applies
    import os
    import subprocess
    import sys

    code = (
        "import time, numpy as np; "
        "from lakejoin.ann import build, HnswParams; "
        "from lakejoin import kernels; "
        f"rng = np.random.default_rng(3); n = {n}; dim = {dim}; "
        "v = rng.standard_normal((n, dim)).astype(np.float32); "
        "v /= np.linalg.norm(v, axis=1, keepdims=True); "
        "items = [(f'v{i}', v[i]) for i in range(n)]; "
        "t0 = time.perf_counter(); "
        "build(items, HnswParams(m=16, ef_construction=100, seed=0)); "
        "print(kernels.BACKEND, time.perf_counter() - t0)"
    )
    env = dict(os.environ)
    if backend_env:
        env["LAKEJOIN_PURE_PYTHON"] = "1"
    else:
        env.pop("LAKEJOIN_PURE_PYTHON", None)
    out = subprocess.run([sys.executable, "-c", code], check=True, env=env,
                         capture_output=True, text=True).stdout.split()
    return out[0], float(out[1])


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-vectors", type=int, default=5000)
    parser.add_argument("--dim", type=int, default=64)
    args = parser.parse_args()

    if cyk is None:
        print("compiled kernels are not available; nothing to compare")
        return

    rng = np.random.default_rng(0)
    rows = []

    t_py = bench_minhash(pyk, rng)
    t_cy = bench_minhash(cyk, rng)
    rows.append(("minhash signature (2000 cells, m=512)", t_py, t_cy))

    t_py = bench_search_layer(pyk, rng, args.n_vectors, args.dim)
    t_cy = bench_search_layer(cyk, rng, args.n_vectors, args.dim)
    rows.append((f"layer search (n={args.n_vectors}, ef=100)", t_py, t_cy))

    backend, t_py = bench_build(True, args.n_vectors, args.dim)
    assert backend == "python"
    backend, t_cy = bench_build(False, args.n_vectors, args.dim)
    rows.append((f"index build (n={args.n_vectors}, efc=100)", t_py, t_cy))
    if backend != "cython":
        print("note: compiled extension not importable in subprocess; "
              "build row compares python vs python")

    print(f"\n{'kernel':<42} {'python':>10} {'cython':>10} {'speedup':>8}")
    print("-" * 74)
    for name, t_py, t_cy in rows:
        print(f"{name:<42} {t_py * 1e3:>8.2f}ms {t_cy * 1e3:>8.2f}ms "
              f"{t_py / t_cy:>7.1f}x")


if __name__ == "__main__":
    main()
