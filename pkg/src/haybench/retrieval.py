"""Sparse, dense, and fused retrieval over a document corpus.

Three base strategies share one output type, ``RankedList``:

* ``bm25``: Okapi BM25 over lowercase alphanumeric terms, authored here so
  the scoring path is auditable end to end.
* ``dense``: cosine similarity between unit-normalized embedding vectors.
* ``hybrid``: reciprocal rank fusion of the two.

Scores are descending, ranks contiguous from 1, ties broken by doc_id so
identical inputs always produce identical lists.
"""

from __future__ import annotations

import math
import re
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import LoadError, ValidationError

EMBEDDING_MAGIC = b"HCEMB1"

_TERM_RE = re.compile(r"[^\W_]+", re.UNICODE)


def analyze(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric characters (underscore is a
    separator, not a term character)."""
    return _TERM_RE.findall(text.lower())


@dataclass(frozen=True)
class RankedList:
    """A retrieval result: (doc_id, score, rank) triples.

    Invariants are enforced at construction: ranks are 1..k contiguous,
    scores non-increasing, doc ids unique.
    """

    query_id: str
    strategy: str
    entries: tuple[tuple[str, float, int], ...]

    def __post_init__(self):
        seen: set[str] = set()
        previous = math.inf
        for position, (doc_id, score, rank) in enumerate(self.entries, start=1):
            if rank != position:
                raise ValidationError(
                    f"{self.query_id}: rank {rank} at position {position}"
                )
            if score > previous:
                raise ValidationError(
                    f"{self.query_id}: score increases at rank {rank}"
                )
            if doc_id in seen:
                raise ValidationError(f"{self.query_id}: duplicate doc {doc_id!r}")
            seen.add(doc_id)
            previous = score

    @classmethod
    def from_scores(
        cls,
        query_id: str,
        strategy: str,
        scores: Mapping[str, float],
        top_n: int | None = None,
    ) -> "RankedList":
        """Sort by score descending, doc_id ascending on ties."""
        ordered = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
        if top_n is not None:
            ordered = ordered[:top_n]
        entries = tuple(
            (doc_id, float(score), rank)
            for rank, (doc_id, score) in enumerate(ordered, start=1)
        )
        return cls(query_id=query_id, strategy=strategy, entries=entries)

    def doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _, _ in self.entries]

    def rank_of(self, doc_id: str) -> int | None:
        for candidate, _, rank in self.entries:
            if candidate == doc_id:
                return rank
        return None

    def __len__(self) -> int:
        return len(self.entries)


class SparseIndex:
    """Inverted index with the statistics BM25 needs.

    Documents are indexed over ``title + "\\n" + body`` so title terms are
    searchable. Term frequencies, document lengths (in analyzed terms), and
    document frequencies are precomputed; ``avgdl`` is the mean analyzed
    length over all indexed documents.
    """

    def __init__(self, term_frequencies: dict[str, Counter], k1: float = 1.2, b: float = 0.75):
        if not term_frequencies:
            raise ValidationError("cannot index an empty corpus")
        self.k1 = k1
        self.b = b
        self.doc_ids = list(term_frequencies)
        self.doc_terms = term_frequencies
        self.doc_length = {
            doc_id: sum(counts.values()) for doc_id, counts in term_frequencies.items()
        }
        total = sum(self.doc_length.values())
        self.avgdl = total / len(self.doc_ids) if self.doc_ids else 0.0
        self.postings: dict[str, dict[str, int]] = {}
        for doc_id, counts in term_frequencies.items():
            for term, tf in counts.items():
                self.postings.setdefault(term, {})[doc_id] = tf
        self.num_docs = len(self.doc_ids)

    @classmethod
    def from_texts(cls, texts: Mapping[str, str], k1: float = 1.2, b: float = 0.75) -> "SparseIndex":
        return cls(
            {doc_id: Counter(analyze(text)) for doc_id, text in texts.items()},
            k1=k1,
            b=b,
        )

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, {}))
        return math.log(1.0 + (self.num_docs - df + 0.5) / (df + 0.5))


def build_sparse_index(corpus, k1: float = 1.2, b: float = 0.75) -> SparseIndex:
    """Index every kept document of a corpus over title and body."""
    texts = {
        doc.doc_id: f"{doc.title}\n{doc.body}" for doc in corpus.documents.values()
    }
    return SparseIndex.from_texts(texts, k1=k1, b=b)


def score_bm25(
    index: SparseIndex,
    query: str,
    query_id: str,
    top_n: int | None = None,
) -> RankedList:
    """Okapi BM25. Query terms contribute once per occurrence; documents
    scoring zero are excluded, so a query with no indexed terms returns an
    empty list."""
    scores: dict[str, float] = {}
    for term in analyze(query):
        postings = index.postings.get(term)
        if not postings:
            continue
        idf = index.idf(term)
        for doc_id, tf in postings.items():
            norm = index.k1 * (
                1.0 - index.b + index.b * index.doc_length[doc_id] / index.avgdl
            )
            scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (index.k1 + 1.0) / (
                tf + norm
            )
    scores = {doc_id: s for doc_id, s in scores.items() if s > 0.0}
    return RankedList.from_scores(query_id, "bm25", scores, top_n=top_n)


class EmbeddingStore:
    """Unit-normalized float32 document vectors with a doc_id row map."""

    def __init__(self, doc_ids: Sequence[str], vectors: np.ndarray):
        if len(doc_ids) != vectors.shape[0]:
            raise ValidationError(
                f"{len(doc_ids)} ids for {vectors.shape[0]} vectors"
            )
        if len(set(doc_ids)) != len(doc_ids):
            raise ValidationError("duplicate doc ids in embedding store")
        self.doc_ids = list(doc_ids)
        matrix = np.asarray(vectors, dtype=np.float32)
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise ValidationError("zero-norm embedding vector")
        self.vectors = matrix / norms
        self.dim = matrix.shape[1]
        self.row = {doc_id: i for i, doc_id in enumerate(self.doc_ids)}

    def __len__(self) -> int:
        return len(self.doc_ids)


def save_embeddings(store: EmbeddingStore, path: str | Path) -> None:
    """Binary layout: magic, u32 count, u32 dim (little endian), then
    count*dim float32 rows. Ids go to a text sidecar, one per line."""
    path = Path(path)
    with path.open("wb") as handle:
        handle.write(EMBEDDING_MAGIC)
        handle.write(struct.pack("<II", len(store), store.dim))
        handle.write(np.ascontiguousarray(store.vectors, dtype=np.float32).tobytes())
    sidecar = path.with_suffix(path.suffix + ".ids")
    sidecar.write_text("".join(f"{doc_id}\n" for doc_id in store.doc_ids), encoding="utf-8")


def load_embeddings(path: str | Path) -> EmbeddingStore:
    path = Path(path)
    with path.open("rb") as handle:
        magic = handle.read(len(EMBEDDING_MAGIC))
        if magic != EMBEDDING_MAGIC:
            raise LoadError(f"{path}: not an embedding file (bad magic)")
        header = handle.read(8)
        if len(header) != 8:
            raise LoadError(f"{path}: truncated header")
        count, dim = struct.unpack("<II", header)
        data = handle.read()
    expected = count * dim * 4
    if len(data) != expected:
        raise LoadError(
            f"{path}: expected {expected} bytes of vector data, found {len(data)}"
        )
    vectors = np.frombuffer(data, dtype="<f4").reshape(count, dim)
    sidecar = path.with_suffix(path.suffix + ".ids")
    if not sidecar.exists():
        raise LoadError(f"{sidecar}: id sidecar missing")
    doc_ids = sidecar.read_text(encoding="utf-8").splitlines()
    if len(doc_ids) != count:
        raise LoadError(
            f"{sidecar}: {len(doc_ids)} ids for {count} vectors"
        )
    return EmbeddingStore(doc_ids, vectors.copy())


def score_dense(
    store: EmbeddingStore,
    query_vector: np.ndarray,
    query_id: str,
    top_n: int | None = None,
) -> RankedList:
    """Cosine similarity against every stored vector. The query is
    normalized here; ties break by doc_id like every other ranking."""
    vector = np.asarray(query_vector, dtype=np.float32).reshape(-1)
    if vector.shape[0] != store.dim:
        raise ValidationError(
            f"query dim {vector.shape[0]} != store dim {store.dim}"
        )
    norm = np.linalg.norm(vector)
    if norm == 0.0:
        raise ValidationError("zero-norm query vector")
    similarities = store.vectors @ (vector / norm)
    scores = {doc_id: float(similarities[i]) for i, doc_id in enumerate(store.doc_ids)}
    return RankedList.from_scores(query_id, "dense", scores, top_n=top_n)


def fuse_rrf(
    lists: Iterable[RankedList],
    rrf_k: int = 60,
    strategy: str = "hybrid",
    top_n: int | None = None,
) -> RankedList:
    """Reciprocal rank fusion: each list contributes ``1 / (rrf_k + rank)``
    for every document it ranks; documents absent from a list get nothing
    from it."""
    lists = list(lists)
    if len(lists) < 2:
        raise ValidationError("fusion needs at least two ranked lists")
    query_ids = {ranked.query_id for ranked in lists}
    if len(query_ids) != 1:
        raise ValidationError(f"cannot fuse across queries: {sorted(query_ids)}")
    scores: dict[str, float] = {}
    for ranked in lists:
        for doc_id, _, rank in ranked.entries:
            scores[doc_id] = scores.get(doc_id, 0.0) + 1.0 / (rrf_k + rank)
    return RankedList.from_scores(query_ids.pop(), strategy, scores, top_n=top_n)
