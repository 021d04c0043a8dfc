"""Wire protocol v1 for external embedders: newline-delimited JSON over
stdio or TCP.

    client -> {"op": "hello", "proto": 1}
    server -> {"op": "hello", "dim": int, "budget": int, "name": str}
    client -> {"op": "embed", "items": [{"id": str, "text": str}, ...]}
    server -> {"op": "vecs", "items": [{"id": str, "v": [float, ...]}, ...]}
    client -> {"op": "count", "text": str}
    server -> {"op": "count", "n": int}
    server -> {"op": "err", "id": str|null, "msg": str}

One request is in flight per connection at a time; responses are matched by
id rather than position. Requests are idempotent, so callers may retry after
a transport failure. The server side here exists for tests and for running
the built-in hash embedder as a service; a language-model sidecar implements
the same protocol independently.
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import socket
import socketserver
import subprocess
import sys
import threading
from typing import Sequence

import numpy as np

from lakejoin.embed import parse_embedder_spec
from lakejoin.errors import (
    DimensionMismatchError,
    EmbedderProtocolError,
    MissingEmbeddingError,
    TransportError,
)

logger = logging.getLogger(__name__)

PROTO_VERSION = 1


def _write_msg(wfile, obj: dict) -> None:
    try:
        wfile.write(json.dumps(obj) + "\n")
        wfile.flush()
    except (BrokenPipeError, OSError) as exc:
        raise TransportError(f"connection lost while sending: {exc}") from exc


def _read_msg(rfile) -> dict:
    try:
        line = rfile.readline()
    except OSError as exc:
        raise TransportError(f"connection lost while reading: {exc}") from exc
    if not line:
        raise TransportError("connection closed by peer")
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise EmbedderProtocolError(f"malformed message: {exc}") from exc
    if not isinstance(obj, dict) or "op" not in obj:
        raise EmbedderProtocolError(f"message without op: {line!r}")
    return obj


class ExternalEmbedder:
    """Client for a protocol-v1 embedder; satisfies the ColumnEmbedder
    interface once the handshake has fixed dim, budget, and name."""

    def __init__(self, rfile, wfile, *, _proc=None, _sock=None):
        self._rfile = rfile
        self._wfile = wfile
        self._proc = _proc
        self._sock = _sock
        _write_msg(wfile, {"op": "hello", "proto": PROTO_VERSION})
        hello = self._expect("hello")
        try:
            self.dim = int(hello["dim"])
            self.token_budget = int(hello["budget"])
            self.name = str(hello.get("name", "external"))
        except (KeyError, TypeError, ValueError) as exc:
            raise EmbedderProtocolError(f"bad hello: {hello!r}") from exc

    @classmethod
    def connect(cls, target: str) -> "ExternalEmbedder":
        """`host:port` opens a TCP connection; anything else is run as a
        stdio subprocess command."""
        host, _, port = target.rpartition(":")
        if host and port.isdigit():
            return cls.from_tcp(host, int(port))
        return cls.from_command(target)

    @classmethod
    def from_tcp(cls, host: str, port: int) -> "ExternalEmbedder":
        try:
            sock = socket.create_connection((host, port), timeout=30)
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
        rfile = sock.makefile("r", encoding="utf-8")
        wfile = sock.makefile("w", encoding="utf-8")
        return cls(rfile, wfile, _sock=sock)

    @classmethod
    def from_command(cls, cmd: str) -> "ExternalEmbedder":
        try:
            proc = subprocess.Popen(
                shlex.split(cmd), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, encoding="utf-8",
            )
        except OSError as exc:
            raise TransportError(f"cannot spawn {cmd!r}: {exc}") from exc
        return cls(proc.stdout, proc.stdin, _proc=proc)

    def _expect(self, op: str) -> dict:
        msg = _read_msg(self._rfile)
        if msg["op"] == "err":
            raise EmbedderProtocolError(
                f"server error (id={msg.get('id')}): {msg.get('msg')}"
            )
        if msg["op"] != op:
            raise EmbedderProtocolError(f"expected op {op!r}, got {msg['op']!r}")
        return msg

    def embed_batch(self, items: Sequence[tuple[str, str]]) -> list[tuple[str, np.ndarray]]:
        """Embed (id, text) pairs; output order matches input order."""
        if not items:
            return []
        _write_msg(self._wfile, {
            "op": "embed",
            "items": [{"id": i, "text": t} for i, t in items],
        })
        reply = self._expect("vecs")
        by_id: dict[str, np.ndarray] = {}
        for entry in reply.get("items", []):
            vec = np.asarray(entry["v"], dtype=np.float64)
            if vec.shape != (self.dim,):
                raise DimensionMismatchError(
                    f"id {entry['id']!r}: got dim {vec.shape}, expected {self.dim}"
                )
            by_id[entry["id"]] = vec
        out = []
        for item_id, _ in items:
            if item_id not in by_id:
                raise MissingEmbeddingError(f"no embedding returned for id {item_id!r}")
            out.append((item_id, by_id[item_id]))
        return out

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([("0", text)])[0][1]

    def count_tokens(self, text: str) -> int:
        _write_msg(self._wfile, {"op": "count", "text": text})
        reply = self._expect("count")
        return int(reply["n"])

    def close(self) -> None:
        for fh in (self._wfile, self._rfile):
            try:
                fh.close()
            except OSError:
                pass
        if self._sock is not None:
            self._sock.close()
        if self._proc is not None:
            self._proc.terminate()
            self._proc.wait(timeout=10)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# ---------------------------------------------------------------------------
# Server side
# ---------------------------------------------------------------------------


def serve_connection(embedder, rfile, wfile) -> None:
    """Answer protocol requests on one connection until EOF."""
    while True:
        try:
            msg = _read_msg(rfile)
        except TransportError:
            return
        except EmbedderProtocolError as exc:
            try:
                _write_msg(wfile, {"op": "err", "id": None, "msg": str(exc)})
                continue
            except TransportError:
                return
        try:
            op = msg["op"]
            if op == "hello":
                reply = {
                    "op": "hello",
                    "dim": embedder.dim,
                    "budget": embedder.token_budget,
                    "name": embedder.name,
                }
            elif op == "embed":
                out = []
                for entry in msg.get("items", []):
                    vec = embedder.embed(str(entry["text"]))
                    out.append({"id": entry["id"], "v": [float(x) for x in vec]})
                reply = {"op": "vecs", "items": out}
            elif op == "count":
                reply = {"op": "count", "n": embedder.count_tokens(str(msg["text"]))}
            else:
                reply = {"op": "err", "id": None, "msg": f"unknown op {op!r}"}
        except Exception as exc:  # report, keep serving
            reply = {"op": "err", "id": None, "msg": f"{type(exc).__name__}: {exc}"}
        try:
            _write_msg(wfile, reply)
        except TransportError:
            return


def serve_stdio(embedder) -> None:
    serve_connection(embedder, sys.stdin, sys.stdout)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        rfile = open(self.rfile.fileno(), "r", encoding="utf-8", closefd=False)
        wfile = open(self.wfile.fileno(), "w", encoding="utf-8", closefd=False)
        serve_connection(self.server.embedder, rfile, wfile)


class EmbedderServer(socketserver.ThreadingTCPServer):
    """TCP server: one serial request stream per connection, many
    connections allowed."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, embedder, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        self.embedder = embedder

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Serve an embedder over the wire protocol")
    parser.add_argument("--embedder", default="hash:256:0",
                        help="embedder spec, e.g. hash:<dim>:<seed>")
    parser.add_argument("--tcp", metavar="HOST:PORT", default=None,
                        help="listen on TCP instead of stdio")
    args = parser.parse_args(argv)
    embedder = parse_embedder_spec(args.embedder)
    if args.tcp:
        host, _, port = args.tcp.rpartition(":")
        server = EmbedderServer(embedder, host or "127.0.0.1", int(port))
        print(f"listening on {server.address}", file=sys.stderr)
        server.serve_forever()
    else:
        serve_stdio(embedder)
    return 0


if __name__ == "__main__":
    sys.exit(main())
