"""Wire-protocol embedding sidecar for lakejoin: serves column embeddings
from a sentence-transformer (or an offline-trainable tiny transformer) and
fine-tunes on generated training pairs with the multiple-negatives ranking
loss."""

__version__ = "0.1.0"
