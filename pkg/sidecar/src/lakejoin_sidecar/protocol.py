"""Embedder wire protocol v1, server side (newline-delimited JSON).

    client -> {"op": "hello", "proto": 1}
    server -> {"op": "hello", "dim": int, "budget": int, "name": str}
    client -> {"op": "embed", "items": [{"id": str, "text": str}, ...]}
    server -> {"op": "vecs", "items": [{"id": str, "v": [float, ...]}, ...]}
    client -> {"op": "count", "text": str}
    server -> {"op": "count", "n": int}
    server -> {"op": "err", "id": str|null, "msg": str}

One request is in flight per connection; requests are idempotent. This is an
independent implementation of the protocol the engine's client speaks.
"""

from __future__ import annotations

import json
import logging
import socketserver
import sys
import threading

logger = logging.getLogger(__name__)

PROTO_VERSION = 1


def handle_request(encoder, msg: dict) -> dict:
    op = msg.get("op")
    if op == "hello":
        if msg.get("proto") not in (None, PROTO_VERSION):
            return {"op": "err", "id": None,
                    "msg": f"unsupported protocol {msg.get('proto')}"}
        return {
            "op": "hello",
            "dim": int(encoder.dim),
            "budget": int(encoder.max_seq_length),
            "name": encoder.name,
        }
    if op == "embed":
        items = msg.get("items", [])
        if not isinstance(items, list):
            return {"op": "err", "id": None, "msg": "items must be a list"}
        texts = [str(entry.get("text", "")) for entry in items]
        vecs = encoder.encode(texts) if texts else []
        out = []
        for entry, vec in zip(items, vecs):
            out.append({"id": entry.get("id"),
                        "v": [float(x) for x in vec]})
        return {"op": "vecs", "items": out}
    if op == "count":
        return {"op": "count", "n": int(encoder.count_tokens(str(msg.get("text", ""))))}
    return {"op": "err", "id": None, "msg": f"unknown op {op!r}"}


def serve_connection(encoder, rfile, wfile) -> None:
    for line in rfile:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
            if not isinstance(msg, dict):
                raise ValueError("message must be an object")
            reply = handle_request(encoder, msg)
        except Exception as exc:
            reply = {"op": "err", "id": None,
                     "msg": f"{type(exc).__name__}: {exc}"}
        try:
            wfile.write(json.dumps(reply) + "\n")
            wfile.flush()
        except (BrokenPipeError, OSError):
            return


def serve_stdio(encoder) -> None:
    serve_connection(encoder, sys.stdin, sys.stdout)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        rfile = open(self.rfile.fileno(), "r", encoding="utf-8", closefd=False)
        wfile = open(self.wfile.fileno(), "w", encoding="utf-8", closefd=False)
        serve_connection(self.server.encoder, rfile, wfile)


class SidecarServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, encoder, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        self.encoder = encoder

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def serve(config) -> None:
    """Blocking entry point: stdio by default, TCP when config.address is
    set. Inference is deterministic (eval mode, seeds fixed at build)."""
    from lakejoin_sidecar.model import build_encoder

    encoder = build_encoder(config)
    if config.address:
        host, _, port = config.address.rpartition(":")
        server = SidecarServer(encoder, host or "127.0.0.1", int(port))
        print(f"serving {encoder.name} on {server.address}", file=sys.stderr)
        server.serve_forever()
    else:
        serve_stdio(encoder)
