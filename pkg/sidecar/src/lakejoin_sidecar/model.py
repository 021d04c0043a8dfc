"""Encoder backends.

Three ways to turn text into a fixed-length vector:

- ``TinyTransformerEncoder``: a small trainable transformer built locally
  (hashed word-level vocabulary, learned positions, mean or CLS pooling).
  Works fully offline and is the backend the fine-tuning tests use.
- ``SentenceTransformerEncoder``: wraps a named sentence-transformers
  checkpoint when that library and its weights are available.
- ``HashEncoder``: deterministic feature hashing, byte-compatible with the
  engine's built-in hash embedder; serves as the protocol echo-test mode.

All backends embed deterministically at inference time (fixed seeds, eval
mode) and advertise their output dimension and token budget.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np
import torch
from torch import nn

MASK64 = (1 << 64) - 1


def stable_hash64(token: str, seed: int = 0) -> int:
    key = (seed & MASK64).to_bytes(8, "little")
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


class HashEncoder:
    """Feature-hashing echo mode: one +-1 bucket per whitespace token,
    integer-accumulated then L2-normalized (zero text stays zero)."""

    trainable = False

    def __init__(self, dim: int = 256, seed: int = 0, max_seq_length: int = 512):
        self.dim = dim
        self.seed = seed
        self.max_seq_length = max_seq_length
        self.name = f"sidecar-hash:{dim}:{seed}"

    def encode(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            counts = np.zeros(self.dim, dtype=np.int64)
            for token in text.split():
                h = stable_hash64(token, self.seed)
                counts[(h >> 1) % self.dim] += 1 if (h & 1) else -1
            norm = np.linalg.norm(counts.astype(np.float64))
            if norm > 0:
                out[row] = counts / norm
        return out

    def count_tokens(self, text: str) -> int:
        return len(text.split())


class TinyTransformerEncoder(nn.Module):
    """Offline-trainable sentence encoder: hashed vocabulary, learned token
    and position embeddings, a small transformer stack, masked mean (or CLS)
    pooling, optional L2 normalization."""

    trainable = True

    def __init__(self, dim: int = 64, vocab_size: int = 4096, layers: int = 2,
                 heads: int = 4, max_seq_length: int = 128, pooling: str = "mean",
                 normalize: bool = True, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.dim = dim
        self.vocab_size = vocab_size
        self.max_seq_length = max_seq_length
        self.pooling = pooling
        self.normalize = normalize
        self.seed = seed
        self.name = f"sidecar-tiny:{dim}:{seed}"

        self.tokens = nn.Embedding(vocab_size, dim)
        self.positions = nn.Embedding(max_seq_length, dim)
        layer = nn.TransformerEncoderLayer(
            d_model=dim, nhead=heads, dim_feedforward=4 * dim,
            batch_first=True, dropout=0.0,
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=layers)

    def tokenize(self, text: str) -> list[int]:
        ids = [stable_hash64(t, self.seed) % self.vocab_size
               for t in text.split()[: self.max_seq_length]]
        return ids or [0]

    def forward(self, batch: list[str]) -> torch.Tensor:
        token_ids = [self.tokenize(t) for t in batch]
        width = max(len(ids) for ids in token_ids)
        input_ids = torch.zeros((len(batch), width), dtype=torch.long)
        mask = torch.zeros((len(batch), width), dtype=torch.bool)
        for i, ids in enumerate(token_ids):
            input_ids[i, : len(ids)] = torch.tensor(ids)
            mask[i, : len(ids)] = True
        pos = torch.arange(width).unsqueeze(0)
        hidden = self.tokens(input_ids) + self.positions(pos)
        hidden = self.encoder(hidden, src_key_padding_mask=~mask)
        if self.pooling == "cls":
            pooled = hidden[:, 0, :]
        else:
            weights = mask.unsqueeze(-1).to(hidden.dtype)
            pooled = (hidden * weights).sum(dim=1) / weights.sum(dim=1)
        if self.normalize:
            pooled = nn.functional.normalize(pooled, p=2, dim=1)
        return pooled

    @torch.no_grad()
    def encode(self, texts: list[str]) -> np.ndarray:
        was_training = self.training
        self.eval()
        try:
            return self.forward(texts).double().cpu().numpy()
        finally:
            self.train(was_training)

    def count_tokens(self, text: str) -> int:
        return len(text.split())


class SentenceTransformerEncoder:
    """Wrapper around a named sentence-transformers checkpoint."""

    trainable = True

    def __init__(self, model_name: str, device: str = "cpu",
                 normalize: bool = True, max_seq_length: int = 512):
        from sentence_transformers import SentenceTransformer

        self._model = SentenceTransformer(model_name, device=device)
        self._model.eval()
        self.normalize = normalize
        self.max_seq_length = min(max_seq_length,
                                  self._model.get_max_seq_length() or max_seq_length)
        self.dim = int(self._model.get_sentence_embedding_dimension())
        self.name = f"sidecar-st:{model_name}"

    def encode(self, texts: list[str]) -> np.ndarray:
        vecs = self._model.encode(texts, convert_to_numpy=True,
                                  normalize_embeddings=self.normalize,
                                  show_progress_bar=False)
        return np.asarray(vecs, dtype=np.float64)

    def count_tokens(self, text: str) -> int:
        return len(self._model.tokenizer(text)["input_ids"])


def build_encoder(config) -> object:
    """Instantiate the backend named by config.model.

    "tiny" and "hash:<dim>:<seed>" always work offline; any other name is
    treated as a sentence-transformers checkpoint and falls back to the tiny
    backend (with a warning) when it cannot be loaded.
    """
    import logging

    name = config.model
    if name == "tiny":
        return TinyTransformerEncoder(
            max_seq_length=min(config.max_seq_length, 128),
            pooling=config.pooling, normalize=config.normalize,
            seed=config.seed,
        )
    if name.startswith("hash"):
        parts = name.split(":")
        dim = int(parts[1]) if len(parts) > 1 and parts[1] else 256
        seed = int(parts[2]) if len(parts) > 2 else 0
        return HashEncoder(dim=dim, seed=seed,
                           max_seq_length=config.max_seq_length)
    try:
        return SentenceTransformerEncoder(
            name, device=config.device, normalize=config.normalize,
            max_seq_length=config.max_seq_length,
        )
    except Exception as exc:
        logging.getLogger(__name__).warning(
            "cannot load sentence-transformer %r (%s); using the tiny "
            "offline backend", name, exc)
        return TinyTransformerEncoder(
            max_seq_length=min(config.max_seq_length, 128),
            pooling=config.pooling, normalize=config.normalize,
            seed=config.seed,
        )
