"""Haystack assembly, ordering, and prompt rendering.

A haystack is the context block handed to the model: every needle document
in full, plus ranked distractors greedily packed under a token budget. The
first distractor that does not fit is truncated at a token boundary to the
remaining budget and admitted if anything remains; packing stops there.
Documents the ranking never covered join the candidate stream after the
ranked ones, in doc_id order, so large budgets can always be filled.

Ordering is a separate step: ``ranked`` puts ranked members first by rank
and unranked ones after by doc_id; ``random`` shuffles with a seed mixed
with the sample id, so each sample gets a different but reproducible
permutation.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, replace
from typing import Sequence

from .corpus import Corpus, QASample
from .errors import ValidationError
from .retrieval import RankedList
from .tokenizers import Tokenizer


@dataclass(frozen=True)
class Member:
    doc_id: str
    title: str
    text: str
    is_needle: bool
    was_truncated: bool
    tokens: int
    rank: int | None


@dataclass(frozen=True)
class OrderingPolicy:
    kind: str
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("ranked", "random"):
            raise ValidationError(f"unknown ordering {self.kind!r}")
        if self.kind == "random" and self.seed is None:
            raise ValidationError("random ordering requires a seed")

    @property
    def tag(self) -> str:
        return self.kind if self.kind == "ranked" else f"random:{self.seed}"


@dataclass(frozen=True)
class Haystack:
    sample_id: str
    budget: int
    members: tuple[Member, ...]
    ordering: str = "ranked"

    @property
    def total_tokens(self) -> int:
        return sum(m.tokens for m in self.members)

    def member_ids(self) -> list[str]:
        return [m.doc_id for m in self.members]

    def digest(self) -> str:
        """Stable fingerprint over member identity, order, and truncation."""
        h = hashlib.sha256()
        for m in self.members:
            h.update(f"{m.doc_id}\x00{int(m.was_truncated)}\x01".encode("utf-8"))
        return h.hexdigest()[:16]


def assemble_haystack(
    sample: QASample,
    ranked: RankedList,
    corpus: Corpus,
    budget: int,
    tokenizer: Tokenizer,
) -> Haystack:
    """Pack needles plus ranked distractors under ``budget`` tokens.

    Needles always enter whole, in the sample's needle order; a budget too
    small even for them is an error. ``budget == 0`` requests the
    no-distractor variant: the haystack is exactly the needle set and the
    reported budget stays 0.
    """
    if budget < 0:
        raise ValidationError(f"budget {budget} < 0")
    members: list[Member] = []
    used = 0
    needle_set = set(sample.needle_ids)
    rank_by_id = {doc_id: rank for doc_id, _, rank in ranked.entries}
    for doc_id in sample.needle_ids:
        doc = corpus.documents[doc_id]
        members.append(
            Member(
                doc_id=doc.doc_id,
                title=doc.title,
                text=doc.body,
                is_needle=True,
                was_truncated=False,
                tokens=doc.token_count,
                rank=rank_by_id.get(doc_id),
            )
        )
        used += doc.token_count
    if budget and used > budget:
        raise ValidationError(
            f"{sample.sample_id}: budget {budget} too small for needle set ({used} tokens)"
        )
    if budget == 0:
        return Haystack(sample_id=sample.sample_id, budget=0, members=tuple(members))

    candidates = [doc_id for doc_id in ranked.doc_ids() if doc_id not in needle_set]
    covered = needle_set | set(candidates)
    candidates.extend(
        doc_id for doc_id in sorted(corpus.documents) if doc_id not in covered
    )
    for doc_id in candidates:
        doc = corpus.documents[doc_id]
        remaining = budget - used
        if remaining <= 0:
            break
        if doc.token_count <= remaining:
            members.append(
                Member(
                    doc_id=doc.doc_id,
                    title=doc.title,
                    text=doc.body,
                    is_needle=False,
                    was_truncated=False,
                    tokens=doc.token_count,
                    rank=rank_by_id.get(doc_id),
                )
            )
            used += doc.token_count
        else:
            clipped = tokenizer.truncate(doc.body, remaining)
            clipped_tokens = tokenizer.count(clipped)
            if clipped_tokens > 0:
                members.append(
                    Member(
                        doc_id=doc.doc_id,
                        title=doc.title,
                        text=clipped,
                        is_needle=False,
                        was_truncated=True,
                        tokens=clipped_tokens,
                        rank=rank_by_id.get(doc_id),
                    )
                )
                used += clipped_tokens
            break
    return Haystack(sample_id=sample.sample_id, budget=budget, members=tuple(members))


def order_haystack(haystack: Haystack, policy: OrderingPolicy) -> Haystack:
    """Reorder members; membership and per-member content never change."""
    members = list(haystack.members)
    if policy.kind == "ranked":
        members.sort(
            key=lambda m: (0, m.rank) if m.rank is not None else (1, m.doc_id)
        )
    else:
        rng = random.Random(f"{policy.seed}:{haystack.sample_id}")
        rng.shuffle(members)
    return replace(haystack, members=tuple(members), ordering=policy.tag)


STATIC_TEMPLATE = """Read the following articles and answer the question below.

{haystack}

What is the correct answer to this question: {question}

Format your response as follows: "The correct answer is (insert answer here)"."""

INTERMEDIATE_TEMPLATE = """Read your previous analyses and the following articles. Analyze the question below.

Previous Analyses: {analyses}

Articles: {haystack}

Question: {question}

Based on your previous analyses and the potentially new articles provided, summarize your findings related to the question and refine the question.

Format your response as follows:

Summary: (Summarize what you found in the articles that relates to the question, including any partial answers, relevant context, or gaps in information.)

Refined Question: (Copy the original question or replace it with a more specific question based on your findings.)"""

FINAL_TEMPLATE = """Read your previous analyses and the following articles, and answer the question below.

Previous Analyses: {analyses}

Articles: {haystack}

What is the correct answer to this question: {question}

Format your response as follows: "The correct answer is (insert answer here)"."""

VARIABLE_TEMPLATE = """Read your previous analyses and the following articles. Analyze the question below.

Previous Analyses: {analyses}

Articles: {haystack}

Question: {question}

Based on your previous analyses and the potentially new articles provided, decide if you are confident in answering the question or if you need additional information.

If you have complete information to fully answer the question, format your response as follows: "The correct answer is (insert answer here)".

If you need more information, format your response as follows:
Summary: (Summarize what you found in the articles that relates to the question, including any partial answers, relevant context, or gaps in information.)

Refined Question: (Copy the original question or replace it with a more specific question based on your findings.)"""

PROMPT_KINDS = ("static", "intermediate", "final", "variable")


def render_haystack_block(haystack: Haystack) -> str:
    return "\n\n".join(f"Title: {m.title}\n{m.text}" for m in haystack.members)


def render_prompt(
    kind: str,
    haystack: Haystack,
    question: str,
    analyses: Sequence[str] = (),
) -> str:
    """Fill one of the four templates. The static template takes no history;
    dynamic templates render an empty history as ``(none)``. A final round
    with no accumulated analyses degenerates to the static prompt, so a
    one-round enforced run is indistinguishable from a static run."""
    if kind not in PROMPT_KINDS:
        raise ValidationError(f"unknown prompt kind {kind!r}")
    block = render_haystack_block(haystack)
    if kind == "static":
        if analyses:
            raise ValidationError("static prompt takes no analysis history")
        return STATIC_TEMPLATE.format(haystack=block, question=question)
    if kind == "final" and not analyses:
        return STATIC_TEMPLATE.format(haystack=block, question=question)
    joined = "\n\n".join(analyses) if analyses else "(none)"
    template = {
        "intermediate": INTERMEDIATE_TEMPLATE,
        "final": FINAL_TEMPLATE,
        "variable": VARIABLE_TEMPLATE,
    }[kind]
    return template.format(haystack=block, question=question, analyses=joined)
