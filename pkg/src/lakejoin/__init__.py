"""lakejoin: joinable-column discovery for table repositories.

Exact top-k search under equi- and semantic-joinability, a MinHash baseline,
and an embedding-based retrieval pipeline (column-to-text rendering, pluggable
embedders, HNSW index). See the README for the CLI and the wire protocol for
external embedders.
"""

__version__ = "0.1.0"
