"""Sidecar configuration.

Training defaults follow the fine-tuning recipe the engine was designed
around: batch size 32, learning rate 2e-5, 10000 warmup steps, weight decay
0.01. Those values suit a pretrained 100M-parameter model; the tiny offline
backend is usually trained with a larger lr and short warmup (pass them
explicitly).
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class SidecarConfig:
    model: str = "tiny"          # "tiny", "hash:<dim>:<seed>", or an ST model name
    pooling: str = "mean"        # mean | cls (tiny backend; ST models pool themselves)
    device: str = "cpu"
    max_seq_length: int = 512
    normalize: bool = True
    seed: int = 0

    # serving
    address: str | None = None   # "host:port" for TCP, None for stdio

    # fine-tuning
    batch_size: int = 32
    learning_rate: float = 2e-5
    warmup_steps: int = 10000
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.pooling not in ("mean", "cls"):
            raise ValueError(f"unknown pooling mode {self.pooling!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_seq_length < 8:
            raise ValueError("max_seq_length must be >= 8")
