"""Deterministic token counting and token-boundary truncation.

Haystack budgets are denominated in tokens, so counts must be reproducible
across runs and machines. Two counters are provided:

* ``ReferenceTokenizer`` -- dependency-free. A token is either a maximal run
  of non-whitespace, non-punctuation characters, or a single punctuation
  character (``string.punctuation``). ``"hello world"`` counts 2,
  ``"it's"`` counts 3.
* ``ExternalTokenizer`` -- delegates to a subprocess or TCP endpoint speaking
  a one-JSON-object-per-line protocol, so budgets can be made bit-compatible
  with a specific model tokenizer when one is available.

Budgets are only meaningful within a single tokenizer; mixing counters in one
run is rejected at the pipeline level by comparing ``Tokenizer.name``.
"""

from __future__ import annotations

import json
import re
import shlex
import socket
import string
import subprocess
import threading
from typing import Protocol

from .errors import ConfigError

_PUNCT = re.escape(string.punctuation)
_TOKEN_RE = re.compile(rf"[{_PUNCT}]|[^\s{_PUNCT}]+")

_TCP_ADDR_RE = re.compile(r"^(?P<host>[\w.\-]+):(?P<port>\d+)$")


class Tokenizer(Protocol):
    name: str

    def count(self, text: str) -> int: ...

    def truncate(self, text: str, budget: int) -> str: ...


class ReferenceTokenizer:
    """Whitespace/punctuation counter. Stateless and safe for concurrent use."""

    name = "reference"

    def count(self, text: str) -> int:
        return sum(1 for _ in _TOKEN_RE.finditer(text))

    def truncate(self, text: str, budget: int) -> str:
        """Longest prefix of ``text`` ending on a token boundary with at most
        ``budget`` tokens. Returns ``text`` unchanged when it already fits."""
        if budget < 0:
            raise ValueError("budget must be >= 0")
        if budget == 0:
            return ""
        end = 0
        seen = 0
        for match in _TOKEN_RE.finditer(text):
            seen += 1
            if seen > budget:
                return text[:end]
            end = match.end()
        return text


class ExternalTokenizer:
    """Counter speaking the line protocol over a subprocess or TCP socket.

    Requests are one JSON object per line, ``{"op": "count", "text": ...}`` or
    ``{"op": "truncate", "text": ..., "budget": ...}``; responses are
    ``{"count": int}`` or ``{"text": str}``. Addresses of the form
    ``host:port`` open a TCP connection; anything else is run as a command
    with the protocol on stdin/stdout. Requests are serialized over the
    channel with a lock, which bounds in-flight requests to one.
    """

    def __init__(self, address: str):
        self.name = f"external({address})"
        self._lock = threading.Lock()
        tcp = _TCP_ADDR_RE.match(address)
        if tcp:
            sock = socket.create_connection((tcp["host"], int(tcp["port"])))
            self._reader = sock.makefile("r", encoding="utf-8")
            self._writer = sock.makefile("w", encoding="utf-8")
            self._proc = None
        else:
            self._proc = subprocess.Popen(
                shlex.split(address),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
            )
            self._reader = self._proc.stdout
            self._writer = self._proc.stdin

    def _call(self, request: dict) -> dict:
        with self._lock:
            self._writer.write(json.dumps(request) + "\n")
            self._writer.flush()
            line = self._reader.readline()
        if not line:
            raise ConfigError(f"tokenizer channel closed: {self.name}")
        return json.loads(line)

    def count(self, text: str) -> int:
        return int(self._call({"op": "count", "text": text})["count"])

    def truncate(self, text: str, budget: int) -> str:
        if budget < 0:
            raise ValueError("budget must be >= 0")
        return self._call({"op": "truncate", "text": text, "budget": budget})["text"]

    def close(self) -> None:
        if self._proc is not None:
            self._proc.stdin.close()
            self._proc.wait(timeout=5)


def get_tokenizer(selector: str) -> Tokenizer:
    """Build a tokenizer from a config value: ``reference`` or
    ``external(<address>)``."""
    if selector == "reference":
        return ReferenceTokenizer()
    match = re.fullmatch(r"external\((?P<address>.+)\)", selector)
    if match:
        return ExternalTokenizer(match["address"])
    raise ConfigError(f"unknown tokenizer selector: {selector!r}")
