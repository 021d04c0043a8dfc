"""Fine-tune an encoder on generated training pairs.

Input is the engine's training-pair format: JSON lines with x_text, y_text,
y_id (plus x_id, jn, augmented, which training ignores). Batches keep y ids
pairwise distinct so every off-diagonal (x_i, y_j) is a usable in-batch
negative, and the objective is the multiple-negatives ranking loss

    L = -(1/N) * sum_i [ S(x_i, y_i) - log sum_j exp(S(x_i, y_j)) ]

with S = cosine similarity, identical to the engine's verification loss.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from lakejoin_sidecar.model import TinyTransformerEncoder

logger = logging.getLogger(__name__)


def mnr_loss_torch(x_embeds: torch.Tensor, y_embeds: torch.Tensor) -> torch.Tensor:
    """Differentiable twin of the engine's mnr_loss (cosine scoring,
    log-sum-exp over the batch)."""
    x = torch.nn.functional.normalize(x_embeds, p=2, dim=1)
    y = torch.nn.functional.normalize(y_embeds, p=2, dim=1)
    scores = x @ y.T
    return -(scores.diagonal() - torch.logsumexp(scores, dim=1)).mean()


def load_pairs(path: str | Path) -> list[dict]:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                pairs.append(json.loads(line))
    return pairs


def distinct_y_batches(pairs: list[dict], batch_size: int,
                       rng: np.random.Generator) -> list[list[dict]]:
    """Shuffle then first-fit into batches with pairwise-distinct y ids;
    incomplete batches are dropped."""
    open_batches: list[tuple[list[dict], set]] = []
    for i in rng.permutation(len(pairs)):
        p = pairs[int(i)]
        for members, ys in open_batches:
            if len(members) < batch_size and p["y_id"] not in ys:
                members.append(p)
                ys.add(p["y_id"])
                break
        else:
            open_batches.append(([p], {p["y_id"]}))
    return [members for members, _ in open_batches if len(members) == batch_size]


@dataclass
class FinetuneResult:
    loss_history: list[float]
    steps: int
    checkpoint_path: str | None
    dropped_pairs: int = 0

    def smoothed(self, window: int = 10) -> list[float]:
        h = self.loss_history
        return [float(np.mean(h[i:i + window]))
                for i in range(0, max(len(h) - window + 1, 1))]


def finetune(
    train_jsonl: str | Path,
    config,
    steps: int = 100,
    encoder: TinyTransformerEncoder | None = None,
    checkpoint_path: str | Path | None = None,
) -> tuple[TinyTransformerEncoder, FinetuneResult]:
    """Train for `steps` optimizer steps and optionally save a checkpoint.

    The encoder defaults to a fresh tiny transformer; pass one to continue
    training. Uses AdamW with linear warmup (config.warmup_steps) and
    config.learning_rate / config.weight_decay.
    """
    torch.manual_seed(config.seed)
    if encoder is None:
        encoder = TinyTransformerEncoder(
            max_seq_length=min(config.max_seq_length, 128),
            pooling=config.pooling, normalize=config.normalize,
            seed=config.seed,
        )
    if not getattr(encoder, "trainable", False):
        raise ValueError(f"encoder {encoder!r} is not trainable")

    pairs = load_pairs(train_jsonl)
    if not pairs:
        raise ValueError(f"{train_jsonl}: no training pairs")
    rng = np.random.default_rng(config.seed)
    batches = distinct_y_batches(pairs, config.batch_size, rng)
    if not batches:
        raise ValueError(
            f"no batch of {config.batch_size} pairs with distinct y ids; "
            "lower the batch size or provide more varied pairs")
    dropped = len(pairs) - sum(len(b) for b in batches)

    optimizer = torch.optim.AdamW(encoder.parameters(),
                                  lr=config.learning_rate,
                                  weight_decay=config.weight_decay)

    def lr_lambda(step: int) -> float:
        if config.warmup_steps <= 0:
            return 1.0
        return min(1.0, (step + 1) / config.warmup_steps)

    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, lr_lambda)

    encoder.train()
    history: list[float] = []
    step = 0
    while step < steps:
        for batch in batches:
            if step >= steps:
                break
            x = encoder.forward([p["x_text"] for p in batch])
            y = encoder.forward([p["y_text"] for p in batch])
            loss = mnr_loss_torch(x, y)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            scheduler.step()
            history.append(float(loss.detach()))
            step += 1
        batches = distinct_y_batches(pairs, config.batch_size, rng)
        if not batches:
            break
    encoder.eval()

    saved = None
    if checkpoint_path is not None:
        save_checkpoint(encoder, checkpoint_path)
        saved = str(checkpoint_path)
    logger.info("finetune: %d steps, loss %.4f -> %.4f", len(history),
                history[0], history[-1])
    return encoder, FinetuneResult(loss_history=history, steps=len(history),
                                   checkpoint_path=saved,
                                   dropped_pairs=dropped)


def save_checkpoint(encoder: TinyTransformerEncoder, path: str | Path) -> None:
    torch.save({
        "kind": "tiny",
        "args": {
            "dim": encoder.dim,
            "vocab_size": encoder.vocab_size,
            "max_seq_length": encoder.max_seq_length,
            "pooling": encoder.pooling,
            "normalize": encoder.normalize,
            "seed": encoder.seed,
        },
        "state_dict": encoder.state_dict(),
    }, path)


def load_checkpoint(path: str | Path) -> TinyTransformerEncoder:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    args = payload["args"]
    layers = sum(1 for k in payload["state_dict"] if k.endswith("self_attn.in_proj_weight"))
    encoder = TinyTransformerEncoder(
        dim=args["dim"], vocab_size=args["vocab_size"], layers=layers,
        max_seq_length=args["max_seq_length"], pooling=args["pooling"],
        normalize=args["normalize"], seed=args["seed"],
    )
    encoder.load_state_dict(payload["state_dict"])
    encoder.eval()
    return encoder
