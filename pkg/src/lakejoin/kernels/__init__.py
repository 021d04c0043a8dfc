"""Hot-loop kernels with a compiled core and a pure-Python fallback.

The Cython extension is tried first; the numpy implementation takes over when
it is missing or when LAKEJOIN_PURE_PYTHON=1 is set. Both expose the same
functions with identical algorithms and tie-breaking; the only permitted
divergence is last-ulp float rounding (numpy reduces in a different order
than the C loops), which can reorder a borderline neighbor-selection. Each
backend is fully deterministic on its own. See benchmarks/compare_kernels.py
for the speed gap.
"""

import os

if os.environ.get("LAKEJOIN_PURE_PYTHON"):
    from lakejoin.kernels import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from lakejoin.kernels import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from lakejoin.kernels import _kernels_py as _impl

        BACKEND = "python"

minhash_signature = _impl.minhash_signature
count_equal = _impl.count_equal
sorted_overlap = _impl.sorted_overlap
search_layer = _impl.search_layer
select_neighbors = _impl.select_neighbors

__all__ = [
    "BACKEND",
    "minhash_signature",
    "count_equal",
    "sorted_overlap",
    "search_layer",
    "select_neighbors",
]
