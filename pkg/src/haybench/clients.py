"""Model and embedding clients.

``HttpModelClient`` speaks a chat-completions endpoint: POST a JSON body
``{model, messages, temperature, top_p, max_tokens}`` and read
``choices[0].message.content``. Authentication is a bearer token from the
``HC_API_KEY`` environment variable when present. 429 and 5xx responses and
connection failures retry with exponential backoff; other 4xx fail at once.

``EmbeddingEndpointClient`` POSTs ``{"texts": [...]}`` to an ``/embed``
endpoint and reads ``{"vectors": [[...]]}``.

The scripted and oracle clients exist for tests and offline runs: one
replays canned responses, the other answers correctly exactly when every
needle title appears early enough in the prompt's article block.
"""

from __future__ import annotations

import os
import threading
import time
from typing import Protocol, Sequence

import numpy as np
import requests

from .errors import ClientError

API_KEY_ENV = "HC_API_KEY"
RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


class CompletionClient(Protocol):
    def complete(self, prompt: str, *, sample_id: str | None = None) -> str: ...


class HttpModelClient:
    def __init__(
        self,
        endpoint: str,
        model: str,
        temperature: float = 0.0,
        top_p: float = 1.0,
        max_tokens: int = 1024,
        max_retries: int = 5,
        backoff: float = 0.5,
        timeout: float = 120.0,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.temperature = temperature
        self.top_p = top_p
        self.max_tokens = max_tokens
        self.max_retries = max_retries
        self.backoff = backoff
        self.timeout = timeout
        self.session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, prompt: str, *, sample_id: str | None = None) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
        }
        last_error = "no attempt made"
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                response = self.session.post(
                    self.endpoint, json=body, headers=self._headers(), timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = f"connection failed: {exc}"
                continue
            if response.status_code == 200:
                try:
                    return response.json()["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError, ValueError) as exc:
                    raise ClientError(
                        f"malformed completion response: {exc}"
                    ) from exc
            if response.status_code in RETRYABLE_STATUS:
                last_error = f"status {response.status_code}"
                continue
            raise ClientError(
                f"completion request rejected: status {response.status_code}: "
                f"{response.text[:200]}"
            )
        raise ClientError(
            f"completion failed after {self.max_retries + 1} attempts ({last_error})"
        )


class EmbeddingEndpointClient:
    def __init__(
        self,
        endpoint: str,
        max_retries: int = 5,
        backoff: float = 0.5,
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.max_retries = max_retries
        self.backoff = backoff
        self.timeout = timeout
        self.session = session or requests.Session()

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        body = {"texts": list(texts)}
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        last_error = "no attempt made"
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                response = self.session.post(
                    self.endpoint, json=body, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = f"connection failed: {exc}"
                continue
            if response.status_code == 200:
                try:
                    vectors = response.json()["vectors"]
                    matrix = np.asarray(vectors, dtype=np.float32)
                except (KeyError, TypeError, ValueError) as exc:
                    raise ClientError(f"malformed embedding response: {exc}") from exc
                if matrix.ndim != 2 or matrix.shape[0] != len(texts):
                    raise ClientError(
                        f"embedding response shape {matrix.shape} for {len(texts)} texts"
                    )
                return matrix
            if response.status_code in RETRYABLE_STATUS:
                last_error = f"status {response.status_code}"
                continue
            raise ClientError(
                f"embedding request rejected: status {response.status_code}: "
                f"{response.text[:200]}"
            )
        raise ClientError(
            f"embedding failed after {self.max_retries + 1} attempts ({last_error})"
        )


class ScriptedClient:
    """Replays canned responses per sample, in order. Records every call so
    tests can assert on the exact prompts sent."""

    def __init__(self, responses: dict[str, Sequence[str]], default: Sequence[str] = ()):
        self._responses = {k: list(v) for k, v in responses.items()}
        self._default = list(default)
        self._cursor: dict[str, int] = {}
        self._lock = threading.Lock()
        self.calls: list[tuple[str | None, str]] = []

    def complete(self, prompt: str, *, sample_id: str | None = None) -> str:
        with self._lock:
            self.calls.append((sample_id, prompt))
            script = self._responses.get(sample_id, self._default)
            index = self._cursor.get(sample_id, 0)
            if index >= len(script):
                raise ClientError(
                    f"scripted client exhausted for sample {sample_id!r} "
                    f"(call {index + 1}, {len(script)} scripted)"
                )
            self._cursor[sample_id] = index + 1
            return script[index]


class NeedleOracleClient:
    """Answers correctly iff every needle title appears among the first
    ``visibility_limit`` articles of the prompt; otherwise asks to refine.

    This gives evaluation runs a model whose accuracy is a pure function of
    haystack composition, which is what end-to-end tests need.
    """

    def __init__(
        self,
        needle_titles: dict[str, Sequence[str]],
        gold_answers: dict[str, str],
        visibility_limit: int = 20,
    ):
        self._needle_titles = {k: list(v) for k, v in needle_titles.items()}
        self._gold = dict(gold_answers)
        self.visibility_limit = visibility_limit
        self._drift: dict[str, int] = {}
        self._lock = threading.Lock()
        self.calls: list[tuple[str | None, str]] = []

    @staticmethod
    def _article_titles(prompt: str) -> list[str]:
        titles = []
        for line in prompt.splitlines():
            if line.startswith("Articles: Title: "):
                titles.append(line[len("Articles: Title: ") :])
            elif line.startswith("Title: "):
                titles.append(line[len("Title: ") :])
        return titles

    def complete(self, prompt: str, *, sample_id: str | None = None) -> str:
        with self._lock:
            self.calls.append((sample_id, prompt))
            if sample_id is None or sample_id not in self._gold:
                raise ClientError(f"oracle has no sample {sample_id!r}")
            titles = self._article_titles(prompt)
            visible = set(titles[: self.visibility_limit])
            if all(title in visible for title in self._needle_titles[sample_id]):
                return f"The correct answer is {self._gold[sample_id]}."
            count = self._drift.get(sample_id, 0) + 1
            self._drift[sample_id] = count
            question = f"what is missing for {sample_id}"
            return (
                f"Summary: not all required articles are visible yet.\n"
                f"Refined Question: {question} drift{count}"
            )
