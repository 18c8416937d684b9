"""Corpus ingestion: JSON-lines documents, QA samples, and the hyperlink graph.

Corpus files carry one object per line: ``{"id", "title", "text", "links",
"redirect"}``. Records with an empty body or ``redirect: true`` are dropped
and counted; self-links, duplicate links, and links to unknown or dropped
documents are removed and counted. Token counts are cached per document at
ingest so haystack assembly never re-tokenizes.

QA files carry one sample per line: ``{"id", "question", "answer", "aliases",
"needles", "hops"}``. Every needle must resolve to a corpus document and the
hop count must equal the needle count and lie in 1..4.

The whole corpus can be persisted as a compact binary index (magic header +
format version + compressed payload) whose contract is round-trip fidelity,
not byte layout.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse

from .errors import IngestError, LoadError, ValidationError
from .tokenizers import Tokenizer

INDEX_MAGIC = b"HCIDX1"
INDEX_VERSION = 1


@dataclass(frozen=True)
class Document:
    """One corpus article. ``out_links`` is cleaned: no self-reference, no
    duplicates, every target exists in the corpus."""

    doc_id: str
    title: str
    body: str
    out_links: frozenset[str]
    token_count: int


@dataclass(frozen=True)
class QASample:
    sample_id: str
    question: str
    gold_answer: str
    answer_aliases: tuple[str, ...]
    needle_ids: tuple[str, ...]
    hop_count: int


@dataclass
class IngestStats:
    records_total: int = 0
    kept: int = 0
    dropped_empty: int = 0
    dropped_redirect: int = 0
    self_links_removed: int = 0
    duplicate_links_removed: int = 0
    dangling_links_removed: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


class HyperlinkGraph:
    """Directed, deduplicated adjacency over document ids.

    Nodes are sorted by doc_id so runs are reproducible; edges are stored as
    index pairs sorted by (source, target). The transposed, row-stochastic
    transition matrix used by PPR is built lazily and cached per symmetrize
    flag.
    """

    def __init__(self, nodes: list[str], edges: Iterable[tuple[str, str]]):
        self.nodes = sorted(nodes)
        self.node_index = {doc_id: i for i, doc_id in enumerate(self.nodes)}
        pairs = set()
        for src, dst in edges:
            if src == dst:
                raise ValueError(f"self-loop on {src!r}")
            if src not in self.node_index or dst not in self.node_index:
                raise ValueError(f"edge endpoint not a node: ({src!r}, {dst!r})")
            pairs.add((self.node_index[src], self.node_index[dst]))
        if pairs:
            self.edges = np.array(sorted(pairs), dtype=np.int64)
        else:
            self.edges = np.empty((0, 2), dtype=np.int64)
        self.out_degree = np.zeros(len(self.nodes), dtype=np.int64)
        if len(self.edges):
            np.add.at(self.out_degree, self.edges[:, 0], 1)
        self._transition_cache: dict[bool, sparse.csr_matrix] = {}

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def out_neighbors(self, doc_id: str) -> list[str]:
        idx = self.node_index[doc_id]
        mask = self.edges[:, 0] == idx
        return [self.nodes[j] for j in self.edges[mask, 1]]

    def edge_ids(self) -> set[tuple[str, str]]:
        return {(self.nodes[s], self.nodes[t]) for s, t in self.edges}

    def transition_transpose(self, symmetrize: bool = False) -> sparse.csr_matrix:
        """CSR matrix ``PT`` with ``PT[j, i] = 1/outdeg(i)`` for each edge
        i -> j, so ``PT @ p`` pushes mass along out-links. Dangling columns
        are all-zero; PPR redistributes their mass to the seed distribution."""
        if symmetrize not in self._transition_cache:
            n = self.num_nodes
            if symmetrize and len(self.edges):
                both = np.vstack([self.edges, self.edges[:, ::-1]])
                pairs = np.unique(both, axis=0)
            else:
                pairs = self.edges
            outdeg = np.zeros(n, dtype=np.int64)
            if len(pairs):
                np.add.at(outdeg, pairs[:, 0], 1)
            if len(pairs):
                weights = 1.0 / outdeg[pairs[:, 0]]
                matrix = sparse.csr_matrix(
                    (weights, (pairs[:, 1], pairs[:, 0])), shape=(n, n)
                )
            else:
                matrix = sparse.csr_matrix((n, n))
            self._transition_cache[symmetrize] = matrix
        return self._transition_cache[symmetrize]

    def dangling_mask(self, symmetrize: bool = False) -> np.ndarray:
        if not symmetrize:
            return self.out_degree == 0
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        if len(self.edges):
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg == 0


@dataclass
class Corpus:
    """Immutable after construction; safe for unlimited concurrent readers."""

    documents: dict[str, Document]
    graph: HyperlinkGraph
    tokenizer_name: str
    stats: IngestStats = field(default_factory=IngestStats)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.documents

    def __len__(self) -> int:
        return len(self.documents)


def build_graph(documents: Mapping[str, Document]) -> HyperlinkGraph:
    """Materialize the graph from cleaned per-document link sets."""
    edges = [
        (doc_id, target)
        for doc_id, doc in documents.items()
        for target in doc.out_links
    ]
    return HyperlinkGraph(list(documents), edges)


def load_corpus(path: str | Path, tokenizer: Tokenizer) -> Corpus:
    """Parse, filter, and link-clean a JSON-lines corpus file.

    Raises IngestError on malformed lines (with the line number) and on
    duplicate doc ids. Dropped records and removed links are counted in
    ``Corpus.stats``.
    """
    path = Path(path)
    stats = IngestStats()
    raw: dict[str, dict] = {}
    order: list[str] = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            stats.records_total += 1
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict) or "id" not in record or "text" not in record:
                raise IngestError(f"{path}:{lineno}: record must carry 'id' and 'text'")
            doc_id = str(record["id"])
            if doc_id in raw:
                raise IngestError(f"{path}:{lineno}: duplicate doc_id {doc_id!r}")
            raw[doc_id] = record
            order.append(doc_id)
            if record.get("redirect", False):
                stats.dropped_redirect += 1
            elif not str(record["text"]).strip():
                stats.dropped_empty += 1

    kept_ids = {
        doc_id
        for doc_id, record in raw.items()
        if not record.get("redirect", False) and str(record["text"]).strip()
    }

    documents: dict[str, Document] = {}
    for doc_id in order:
        if doc_id not in kept_ids:
            continue
        record = raw[doc_id]
        links = [str(x) for x in record.get("links", [])]
        unique = set(links)
        stats.duplicate_links_removed += len(links) - len(unique)
        if doc_id in unique:
            unique.discard(doc_id)
            stats.self_links_removed += 1
        resolved = {target for target in unique if target in kept_ids}
        stats.dangling_links_removed += len(unique) - len(resolved)
        body = str(record["text"])
        documents[doc_id] = Document(
            doc_id=doc_id,
            title=str(record.get("title", "")),
            body=body,
            out_links=frozenset(resolved),
            token_count=tokenizer.count(body),
        )
    stats.kept = len(documents)
    return Corpus(
        documents=documents,
        graph=build_graph(documents),
        tokenizer_name=tokenizer.name,
        stats=stats,
    )


def load_qa_samples(path: str | Path, corpus: Corpus) -> list[QASample]:
    """Parse and validate QA samples against a loaded corpus."""
    path = Path(path)
    samples: list[QASample] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            sample_id = str(record["id"])
            if sample_id in seen:
                raise IngestError(f"{path}:{lineno}: duplicate sample id {sample_id!r}")
            seen.add(sample_id)
            needles = tuple(str(x) for x in record.get("needles", []))
            if not needles:
                raise ValidationError(f"sample {sample_id}: empty needle set")
            missing = [n for n in needles if n not in corpus]
            if missing:
                raise ValidationError(
                    f"sample {sample_id}: needles not in corpus: {', '.join(missing)}"
                )
            hops = int(record["hops"])
            if hops not in (1, 2, 3, 4):
                raise ValidationError(f"sample {sample_id}: hop count {hops} not in 1..4")
            if hops != len(needles):
                raise ValidationError(
                    f"sample {sample_id}: hop count {hops} != {len(needles)} needles"
                )
            samples.append(
                QASample(
                    sample_id=sample_id,
                    question=str(record["question"]),
                    gold_answer=str(record["answer"]),
                    answer_aliases=tuple(str(a) for a in record.get("aliases", [])),
                    needle_ids=needles,
                    hop_count=hops,
                )
            )
    return samples


def hop_histogram(samples: Iterable[QASample]) -> dict[int, int]:
    histogram: dict[int, int] = {}
    for sample in samples:
        histogram[sample.hop_count] = histogram.get(sample.hop_count, 0) + 1
    return dict(sorted(histogram.items()))


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Persist the corpus as a compact binary index for reuse."""
    payload = {
        "tokenizer": corpus.tokenizer_name,
        "stats": corpus.stats.as_dict(),
        "documents": [
            [
                doc.doc_id,
                doc.title,
                doc.body,
                sorted(doc.out_links),
                doc.token_count,
            ]
            for doc in corpus.documents.values()
        ],
    }
    blob = zlib.compress(json.dumps(payload, ensure_ascii=False).encode("utf-8"), level=6)
    with Path(path).open("wb") as handle:
        handle.write(INDEX_MAGIC)
        handle.write(struct.pack("<I", INDEX_VERSION))
        handle.write(struct.pack("<I", len(blob)))
        handle.write(blob)


def load_saved_corpus(path: str | Path, expected_tokenizer: str | None = None) -> Corpus:
    """Reload a persisted corpus index. Token counts are trusted as stored;
    a mismatch with the active tokenizer is rejected to keep budgets
    comparable."""
    path = Path(path)
    with path.open("rb") as handle:
        magic = handle.read(len(INDEX_MAGIC))
        if magic != INDEX_MAGIC:
            raise LoadError(f"{path}: not a corpus index (bad magic)")
        (version,) = struct.unpack("<I", handle.read(4))
        if version != INDEX_VERSION:
            raise LoadError(f"{path}: unsupported index version {version}")
        (size,) = struct.unpack("<I", handle.read(4))
        blob = handle.read(size)
    payload = json.loads(zlib.decompress(blob).decode("utf-8"))
    if expected_tokenizer is not None and payload["tokenizer"] != expected_tokenizer:
        raise LoadError(
            f"{path}: index built with tokenizer {payload['tokenizer']!r}, "
            f"run configured with {expected_tokenizer!r}"
        )
    documents = {
        doc_id: Document(
            doc_id=doc_id,
            title=title,
            body=body,
            out_links=frozenset(links),
            token_count=token_count,
        )
        for doc_id, title, body, links, token_count in payload["documents"]
    }
    stats = IngestStats(**payload["stats"])
    return Corpus(
        documents=documents,
        graph=build_graph(documents),
        tokenizer_name=payload["tokenizer"],
        stats=stats,
    )
