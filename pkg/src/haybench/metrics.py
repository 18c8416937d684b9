"""Retrieval and answer-quality metrics.

Retrieval metrics treat the needle set as binary relevance. Answer scoring
follows the usual extractive-QA recipe: normalize both strings (lowercase,
strip punctuation, drop English articles, collapse whitespace), compare
token bags, and take the best score over the gold answer and its aliases.
"""

from __future__ import annotations

import csv
import json
import math
import re
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ValidationError
from .retrieval import RankedList

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")


def recall_at_n(ranked: RankedList, needle_ids: Iterable[str], n: int) -> float:
    """Fraction of needles found in the top n."""
    needles = set(needle_ids)
    if not needles:
        raise ValidationError("recall undefined for an empty needle set")
    if n < 1:
        raise ValidationError(f"cutoff {n} < 1")
    top = set(ranked.doc_ids()[:n])
    return len(needles & top) / len(needles)


def ndcg_at_n(ranked: RankedList, needle_ids: Iterable[str], n: int) -> float:
    """Binary-gain NDCG: hits at rank i contribute 1/log2(i+1); the ideal
    ordering packs all needles at the top."""
    needles = set(needle_ids)
    if not needles:
        raise ValidationError("ndcg undefined for an empty needle set")
    if n < 1:
        raise ValidationError(f"cutoff {n} < 1")
    dcg = sum(
        1.0 / math.log2(i + 1)
        for i, doc_id in enumerate(ranked.doc_ids()[:n], start=1)
        if doc_id in needles
    )
    ideal = sum(1.0 / math.log2(i + 1) for i in range(1, min(len(needles), n) + 1))
    return dcg / ideal


def normalize_answer(text: str) -> str:
    """Lowercase, delete punctuation, remove a/an/the, collapse whitespace."""
    text = text.lower()
    text = text.translate(_PUNCT_TABLE)
    text = _ARTICLE_RE.sub(" ", text)
    return " ".join(text.split())


@dataclass(frozen=True)
class F1Score:
    precision: float
    recall: float
    f1: float
    exact_match: bool


def _token_f1(prediction: str, gold: str) -> F1Score:
    pred_tokens = normalize_answer(prediction).split()
    gold_tokens = normalize_answer(gold).split()
    exact = pred_tokens == gold_tokens
    if not pred_tokens or not gold_tokens:
        value = 1.0 if exact else 0.0
        return F1Score(precision=value, recall=value, f1=value, exact_match=exact)
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return F1Score(precision=0.0, recall=0.0, f1=0.0, exact_match=False)
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    f1 = 2.0 * precision * recall / (precision + recall)
    return F1Score(precision=precision, recall=recall, f1=f1, exact_match=exact)


def answer_f1(
    prediction: str, gold: str, aliases: Sequence[str] = ()
) -> F1Score:
    """Best token-bag F1 over the gold answer and every alias; ties prefer
    the earlier reference so the result is deterministic."""
    best = _token_f1(prediction, gold)
    for alias in aliases:
        candidate = _token_f1(prediction, alias)
        if candidate.f1 > best.f1 or (
            candidate.f1 == best.f1 and candidate.exact_match and not best.exact_match
        ):
            best = candidate
    return best


@dataclass(frozen=True)
class RetrievalReport:
    """Mean recall/NDCG per strategy per cutoff over a sample set."""

    cutoffs: tuple[int, ...]
    recall: Mapping[str, Mapping[int, float]]
    ndcg: Mapping[str, Mapping[int, float]]
    sample_count: int

    def rows(self) -> list[dict]:
        out = []
        for strategy in sorted(self.recall):
            for n in self.cutoffs:
                out.append(
                    {
                        "strategy": strategy,
                        "n": n,
                        "recall": self.recall[strategy][n],
                        "ndcg": self.ndcg[strategy][n],
                    }
                )
        return out

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=["strategy", "n", "recall", "ndcg"])
            writer.writeheader()
            for row in self.rows():
                writer.writerow(row)

    def write_json(self, path: str | Path) -> None:
        payload = {
            "sample_count": self.sample_count,
            "cutoffs": list(self.cutoffs),
            "recall": {s: {str(n): v for n, v in by_n.items()} for s, by_n in self.recall.items()},
            "ndcg": {s: {str(n): v for n, v in by_n.items()} for s, by_n in self.ndcg.items()},
        }
        Path(path).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def compute_retrieval_report(
    rankings: Mapping[str, Mapping[str, RankedList]],
    needle_sets: Mapping[str, Iterable[str]],
    cutoffs: Sequence[int] = (10, 20, 40, 80, 160),
) -> RetrievalReport:
    """``rankings[strategy][sample_id]`` -> RankedList. Every strategy must
    cover every sample in ``needle_sets``."""
    if not needle_sets:
        raise ValidationError("no samples to score")
    cutoffs = tuple(cutoffs)
    recall: dict[str, dict[int, float]] = {}
    ndcg: dict[str, dict[int, float]] = {}
    for strategy, per_sample in rankings.items():
        missing = set(needle_sets) - set(per_sample)
        if missing:
            raise ValidationError(
                f"{strategy}: missing rankings for {len(missing)} samples"
            )
        recall[strategy] = {}
        ndcg[strategy] = {}
        for n in cutoffs:
            recall_values = []
            ndcg_values = []
            for sample_id, needles in needle_sets.items():
                ranked = per_sample[sample_id]
                recall_values.append(recall_at_n(ranked, needles, n))
                ndcg_values.append(ndcg_at_n(ranked, needles, n))
            recall[strategy][n] = sum(recall_values) / len(recall_values)
            ndcg[strategy][n] = sum(ndcg_values) / len(ndcg_values)
    return RetrievalReport(
        cutoffs=cutoffs, recall=recall, ndcg=ndcg, sample_count=len(needle_sets)
    )
