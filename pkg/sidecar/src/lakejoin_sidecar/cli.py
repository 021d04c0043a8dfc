"""Sidecar command line: serve the embedder, or fine-tune on training pairs."""

from __future__ import annotations

import argparse
import logging
import sys

from lakejoin_sidecar.config import SidecarConfig
from lakejoin_sidecar.finetune import finetune
from lakejoin_sidecar.protocol import serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lakejoin-sidecar")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def model_flags(p):
        p.add_argument("--model", default="tiny",
                       help="tiny | hash:<dim>:<seed> | sentence-transformers name")
        p.add_argument("--pooling", choices=["mean", "cls"], default="mean")
        p.add_argument("--device", default="cpu")
        p.add_argument("--max-seq-length", type=int, default=512)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("serve", help="answer wire-protocol requests")
    model_flags(p)
    p.add_argument("--tcp", metavar="HOST:PORT", default=None,
                   help="listen on TCP instead of stdio")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("finetune", help="train on generated pairs")
    model_flags(p)
    p.add_argument("--train", required=True, help="training-pair JSONL")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=2e-5)
    p.add_argument("--warmup-steps", type=int, default=10000)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(fn=cmd_finetune)
    return parser


def _config(args) -> SidecarConfig:
    return SidecarConfig(
        model=args.model,
        pooling=args.pooling,
        device=args.device,
        max_seq_length=args.max_seq_length,
        seed=args.seed,
        address=getattr(args, "tcp", None),
        batch_size=getattr(args, "batch_size", 32),
        learning_rate=getattr(args, "lr", 2e-5),
        warmup_steps=getattr(args, "warmup_steps", 10000),
        weight_decay=getattr(args, "weight_decay", 0.01),
    )


def cmd_serve(args) -> int:
    serve(_config(args))
    return 0


def cmd_finetune(args) -> int:
    _, result = finetune(args.train, _config(args), steps=args.steps,
                         checkpoint_path=args.out)
    print(f"trained {result.steps} steps "
          f"(loss {result.loss_history[0]:.4f} -> {result.loss_history[-1]:.4f}, "
          f"{result.dropped_pairs} pairs dropped); checkpoint: {result.checkpoint_path}")
    return 0


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    return args.fn(args)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
