"""Needle-in-a-haystack construction and evaluation over linked corpora.

The library builds token-budgeted contexts ("haystacks") around known
answer documents ("needles"), fills the rest with retriever-ranked
distractors, and measures how retrieval quality, budget, ordering, and
multi-round query refinement change a model's answer quality.
"""

__version__ = "0.1.0"

from .corpus import Corpus, Document, HyperlinkGraph, QASample, load_corpus, load_qa_samples
from .errors import (
    ClientError,
    ConfigError,
    HaybenchError,
    IngestError,
    LoadError,
    ValidationError,
)
from .harness import DynamicMode, DynamicTrace, EvalResult, run_dynamic, run_static
from .haystack import Haystack, Member, OrderingPolicy, assemble_haystack, order_haystack, render_prompt
from .metrics import answer_f1, compute_retrieval_report, ndcg_at_n, normalize_answer, recall_at_n
from .pagerank import RETRIEVER_PPR_DEFAULTS, PprConfig, PprVector, personalized_pagerank, rerank_ppr
from .pipeline import Pipeline
from .retrieval import (
    EmbeddingStore,
    RankedList,
    SparseIndex,
    build_sparse_index,
    fuse_rrf,
    score_bm25,
    score_dense,
)
from .tokenizers import ReferenceTokenizer, get_tokenizer

__all__ = [
    "__version__",
    "Corpus",
    "Document",
    "HyperlinkGraph",
    "QASample",
    "load_corpus",
    "load_qa_samples",
    "HaybenchError",
    "IngestError",
    "ValidationError",
    "LoadError",
    "ClientError",
    "ConfigError",
    "DynamicMode",
    "DynamicTrace",
    "EvalResult",
    "run_static",
    "run_dynamic",
    "Haystack",
    "Member",
    "OrderingPolicy",
    "assemble_haystack",
    "order_haystack",
    "render_prompt",
    "answer_f1",
    "normalize_answer",
    "recall_at_n",
    "ndcg_at_n",
    "compute_retrieval_report",
    "PprConfig",
    "PprVector",
    "RETRIEVER_PPR_DEFAULTS",
    "personalized_pagerank",
    "rerank_ppr",
    "Pipeline",
    "RankedList",
    "SparseIndex",
    "EmbeddingStore",
    "build_sparse_index",
    "score_bm25",
    "score_dense",
    "fuse_rrf",
    "ReferenceTokenizer",
    "get_tokenizer",
]
