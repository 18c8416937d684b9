"""Wires corpus, retrievers, reranking, haystack assembly, and harnesses.

A ``Pipeline`` owns the loaded corpus plus whatever retrieval backends the
run configured and exposes the operations the CLI calls: rank a query under
a strategy tag, build a haystack for a sample, and evaluate sample batches
(static or dynamic) with a worker pool. Strategy tags are ``bm25``,
``dense``, ``hybrid``, each optionally suffixed ``+ppr`` for the graph
rerank.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from .corpus import Corpus, QASample
from .errors import ConfigError
from .harness import DynamicMode, DynamicTrace, EvalResult, run_dynamic, run_static
from .haystack import Haystack, OrderingPolicy, assemble_haystack, order_haystack
from .pagerank import PprConfig, rerank_ppr
from .retrieval import (
    EmbeddingStore,
    RankedList,
    SparseIndex,
    fuse_rrf,
    score_bm25,
    score_dense,
)
from .tokenizers import Tokenizer

BASE_STRATEGIES = ("bm25", "dense", "hybrid")


def split_strategy(tag: str) -> tuple[str, bool]:
    base = tag.removesuffix("+ppr")
    if base not in BASE_STRATEGIES:
        raise ConfigError(f"unknown retrieval strategy {tag!r}")
    return base, tag.endswith("+ppr")


class Pipeline:
    def __init__(
        self,
        corpus: Corpus,
        tokenizer: Tokenizer,
        sparse_index: SparseIndex | None = None,
        embedding_store: EmbeddingStore | None = None,
        query_vectors: "EmbeddingStore | None" = None,
        embed_client=None,
        rrf_k: int = 60,
        ppr_overrides: dict | None = None,
        top_n: int = 1000,
    ):
        self.corpus = corpus
        self.tokenizer = tokenizer
        self.sparse_index = sparse_index
        self.embedding_store = embedding_store
        self.query_vectors = query_vectors
        self.embed_client = embed_client
        self.rrf_k = rrf_k
        self.ppr_overrides = dict(ppr_overrides or {})
        self.top_n = top_n

    def _query_id(self, sample_id: str | None, query: str) -> str:
        if sample_id is not None:
            return sample_id
        return "q-" + hashlib.sha256(query.encode("utf-8")).hexdigest()[:12]

    def _query_vector(self, query: str, sample_id: str | None) -> np.ndarray:
        # A live endpoint can embed any refined query; the precomputed file
        # only covers the original questions, keyed by sample id.
        if self.embed_client is not None:
            return self.embed_client.embed([query])[0]
        if self.query_vectors is not None and sample_id is not None:
            if sample_id in self.query_vectors.row:
                return self.query_vectors.vectors[self.query_vectors.row[sample_id]]
            raise ConfigError(f"no precomputed query vector for sample {sample_id!r}")
        raise ConfigError(
            "dense retrieval needs an embedding endpoint or precomputed query vectors"
        )

    def _base_list(self, base: str, query: str, sample_id: str | None) -> RankedList:
        query_id = self._query_id(sample_id, query)
        if base == "bm25":
            if self.sparse_index is None:
                raise ConfigError("bm25 retrieval needs a sparse index")
            return score_bm25(self.sparse_index, query, query_id, top_n=self.top_n)
        if base == "dense":
            if self.embedding_store is None:
                raise ConfigError("dense retrieval needs document embeddings")
            vector = self._query_vector(query, sample_id)
            return score_dense(self.embedding_store, vector, query_id, top_n=self.top_n)
        sparse_list = self._base_list("bm25", query, sample_id)
        dense_list = self._base_list("dense", query, sample_id)
        return fuse_rrf(
            [sparse_list, dense_list], rrf_k=self.rrf_k, strategy="hybrid", top_n=self.top_n
        )

    def rank(self, tag: str, query: str, sample_id: str | None = None) -> RankedList:
        base, use_ppr = split_strategy(tag)
        ranked = self._base_list(base, query, sample_id)
        if use_ppr:
            config = PprConfig.for_strategy(base, **self.ppr_overrides)
            ranked = rerank_ppr(ranked, self.corpus.graph, config, top_n=self.top_n)
        return ranked

    def build_haystack(
        self,
        sample: QASample,
        tag: str,
        budget: int,
        policy: OrderingPolicy,
        query: str | None = None,
    ) -> Haystack:
        ranked = self.rank(tag, query if query is not None else sample.question, sample.sample_id)
        haystack = assemble_haystack(sample, ranked, self.corpus, budget, self.tokenizer)
        return order_haystack(haystack, policy)

    @staticmethod
    def empty_haystack(sample: QASample) -> Haystack:
        """No articles at all: the contamination baseline."""
        return Haystack(sample_id=sample.sample_id, budget=0, members=())

    def eval_static(
        self,
        samples: Sequence[QASample],
        tag: str,
        budget: int,
        policy: OrderingPolicy,
        client,
        *,
        strict: bool = False,
        no_context: bool = False,
        workers: int = 4,
    ) -> list[EvalResult]:
        def one(sample: QASample) -> EvalResult:
            retriever = "none" if no_context else tag
            try:
                if no_context:
                    haystack = self.empty_haystack(sample)
                else:
                    haystack = self.build_haystack(sample, tag, budget, policy)
                return run_static(
                    sample, haystack, client, retriever=retriever, strict=strict
                )
            except Exception as exc:
                return EvalResult.from_error(
                    sample, retriever, budget, policy.tag, "static", str(exc)
                )

        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, samples))

    def eval_dynamic(
        self,
        samples: Sequence[QASample],
        tag: str,
        budget: int,
        policy: OrderingPolicy,
        client,
        mode: DynamicMode,
        *,
        final_uses_original: bool = False,
        strict: bool = False,
        workers: int = 4,
    ) -> tuple[list[EvalResult], list[DynamicTrace | None]]:
        def one(sample: QASample) -> tuple[EvalResult, DynamicTrace | None]:
            try:
                return run_dynamic(
                    sample,
                    mode,
                    lambda query: self.build_haystack(sample, tag, budget, policy, query=query),
                    client,
                    retriever=tag,
                    final_uses_original=final_uses_original,
                    strict=strict,
                )
            except Exception as exc:
                return (
                    EvalResult.from_error(
                        sample, tag, budget, policy.tag, mode.tag, str(exc)
                    ),
                    None,
                )

        with ThreadPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(one, samples))
        return [p[0] for p in pairs], [p[1] for p in pairs]
