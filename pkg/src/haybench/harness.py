"""Evaluation harnesses: single-shot and multi-round question answering.

The static harness renders one prompt over a fixed haystack and scores the
reply. The dynamic harness runs a query-refinement loop: intermediate
rounds ask the model to summarize findings and refine the question, the
refined question drives retrieval for the next round (the needle set never
changes), and a final round demands an answer. ``enforced`` mode always
runs the configured number of rounds; ``variable`` mode lets the model
answer early and forces an answer at the round cap.

Replies are free text. The answer is whatever follows the last occurrence
of the marker phrase ``the correct answer is``; refinement replies carry
``Summary:`` and ``Refined Question:`` lines. Parsing is deliberately
forgiving, and every fallback is recorded in the trace rather than raised.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Callable

from .corpus import QASample
from .errors import ValidationError
from .haystack import Haystack, render_prompt
from .metrics import F1Score, answer_f1

ANSWER_MARKER_RE = re.compile(r"the correct answer is", re.IGNORECASE)
_SUMMARY_RE = re.compile(r"^[ \t]*summary:", re.IGNORECASE | re.MULTILINE)
_REFINED_RE = re.compile(r"^[ \t]*refined question:", re.IGNORECASE | re.MULTILINE)
_WRAPPERS = (('"', '"'), ("'", "'"), ("(", ")"), ("[", "]"))


def extract_answer(response: str) -> str | None:
    """Text after the last marker phrase, cleaned: outer whitespace, one
    trailing period, and one layer of symmetric quotes or brackets are
    stripped. Returns None when the marker is absent or nothing survives
    cleaning."""
    matches = list(ANSWER_MARKER_RE.finditer(response))
    if not matches:
        return None
    tail = response[matches[-1].end() :].strip()
    if tail.endswith("."):
        tail = tail[:-1].rstrip()
    for left, right in _WRAPPERS:
        if len(tail) >= 2 and tail.startswith(left) and tail.endswith(right):
            tail = tail[1:-1].strip()
            break
    return tail or None


def parse_intermediate(response: str) -> tuple[str, str] | None:
    """(summary, refined question) from a refinement reply, or None.

    The summary runs from the first line-anchored ``Summary:`` label to the
    last line-anchored ``Refined Question:`` label; the refined question is
    everything after that label. An empty summary is acceptable, an empty
    refined question is not, and the labels must appear in order.
    """
    summary_match = _SUMMARY_RE.search(response)
    refined_matches = list(_REFINED_RE.finditer(response))
    if summary_match is None or not refined_matches:
        return None
    refined_match = refined_matches[-1]
    if refined_match.start() < summary_match.end():
        return None
    summary = response[summary_match.end() : refined_match.start()].strip()
    refined = response[refined_match.end() :].strip()
    if not refined:
        return None
    return summary, refined


@dataclass(frozen=True)
class DynamicMode:
    """``enforced`` runs exactly ``rounds`` rounds; ``variable`` runs at
    most ``rounds`` and lets the model answer sooner."""

    kind: str
    rounds: int = 3

    def __post_init__(self):
        if self.kind not in ("enforced", "variable"):
            raise ValidationError(f"unknown dynamic mode {self.kind!r}")
        if self.rounds < 1:
            raise ValidationError(f"round count {self.rounds} < 1")

    @property
    def tag(self) -> str:
        return f"{self.kind}:{self.rounds}"


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    query: str
    haystack_digest: str
    member_count: int
    prompt_sha256: str
    response: str
    summary: str | None
    refined_question: str | None
    parse_fallback: bool
    is_final_answer: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class DynamicTrace:
    sample_id: str
    mode: str
    termination: str
    rounds: tuple[RoundRecord, ...]

    def __post_init__(self):
        finals = [r for r in self.rounds if r.is_final_answer]
        if len(finals) != 1 or not self.rounds[-1].is_final_answer:
            raise ValidationError(
                f"{self.sample_id}: trace must end with its single answer round"
            )
        if self.termination not in ("answered", "rounds_exhausted", "parse_fallback"):
            raise ValidationError(f"unknown termination {self.termination!r}")

    def as_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "mode": self.mode,
            "termination": self.termination,
            "rounds": [r.as_dict() for r in self.rounds],
        }


@dataclass(frozen=True)
class EvalResult:
    sample_id: str
    retriever: str
    budget: int
    ordering: str
    mode: str
    rounds_used: int
    hop_count: int
    response: str
    answer: str
    answer_extracted: bool
    f1: float
    precision: float
    recall: float
    exact_match: bool
    errored: bool = False
    error: str | None = None

    def as_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_error(
        cls,
        sample: QASample,
        retriever: str,
        budget: int,
        ordering: str,
        mode: str,
        message: str,
    ) -> "EvalResult":
        return cls(
            sample_id=sample.sample_id,
            retriever=retriever,
            budget=budget,
            ordering=ordering,
            mode=mode,
            rounds_used=0,
            hop_count=sample.hop_count,
            response="",
            answer="",
            answer_extracted=False,
            f1=0.0,
            precision=0.0,
            recall=0.0,
            exact_match=False,
            errored=True,
            error=message,
        )


def _score(sample: QASample, response: str, strict: bool) -> tuple[str, bool, F1Score]:
    """Extract and score. Without the marker, lenient scoring grades the
    whole reply; strict scoring grades it as wrong."""
    extracted = extract_answer(response)
    if extracted is not None:
        return extracted, True, answer_f1(extracted, sample.gold_answer, sample.answer_aliases)
    if strict:
        return "", False, F1Score(precision=0.0, recall=0.0, f1=0.0, exact_match=False)
    return response, False, answer_f1(response, sample.gold_answer, sample.answer_aliases)


def _result(
    sample: QASample,
    retriever: str,
    haystack: Haystack,
    mode: str,
    rounds_used: int,
    response: str,
    strict: bool,
) -> EvalResult:
    answer, extracted, score = _score(sample, response, strict)
    return EvalResult(
        sample_id=sample.sample_id,
        retriever=retriever,
        budget=haystack.budget,
        ordering=haystack.ordering,
        mode=mode,
        rounds_used=rounds_used,
        hop_count=sample.hop_count,
        response=response,
        answer=answer,
        answer_extracted=extracted,
        f1=score.f1,
        precision=score.precision,
        recall=score.recall,
        exact_match=score.exact_match,
        errored=False,
        error=None,
    )


def run_static(
    sample: QASample,
    haystack: Haystack,
    client,
    *,
    retriever: str = "none",
    strict: bool = False,
) -> EvalResult:
    prompt = render_prompt("static", haystack, sample.question)
    response = client.complete(prompt, sample_id=sample.sample_id)
    return _result(sample, retriever, haystack, "static", 1, response, strict)


def _prompt_sha(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def run_dynamic(
    sample: QASample,
    mode: DynamicMode,
    haystack_for: Callable[[str], Haystack],
    client,
    *,
    retriever: str = "none",
    final_uses_original: bool = False,
    strict: bool = False,
) -> tuple[EvalResult, DynamicTrace]:
    """Run the refinement loop for one sample.

    ``haystack_for`` maps the current query to a fresh haystack; the caller
    owns retrieval, budgets, and ordering. The final round's prompt uses the
    latest refined question unless ``final_uses_original`` flips it back to
    the original; ranking always uses the latest refinement.
    """
    analyses: list[str] = []
    query = sample.question
    records: list[RoundRecord] = []
    termination = "parse_fallback"
    final_haystack: Haystack | None = None
    final_response = ""

    for round_index in range(1, mode.rounds + 1):
        haystack = haystack_for(query)
        final_haystack = haystack
        is_cap = round_index == mode.rounds
        if is_cap:
            prompt_query = sample.question if final_uses_original else query
            prompt = render_prompt("final", haystack, prompt_query, analyses)
        elif mode.kind == "enforced":
            prompt = render_prompt("intermediate", haystack, query, analyses)
        else:
            prompt = render_prompt("variable", haystack, query, analyses)
        response = client.complete(prompt, sample_id=sample.sample_id)

        if is_cap:
            answered = extract_answer(response) is not None
            if mode.kind == "enforced":
                termination = "answered" if answered else "parse_fallback"
            else:
                termination = "rounds_exhausted" if answered else "parse_fallback"
            records.append(
                RoundRecord(
                    round_index=round_index,
                    query=query,
                    haystack_digest=haystack.digest(),
                    member_count=len(haystack.members),
                    prompt_sha256=_prompt_sha(prompt),
                    response=response,
                    summary=None,
                    refined_question=None,
                    parse_fallback=not answered,
                    is_final_answer=True,
                )
            )
            final_response = response
            break

        if mode.kind == "variable" and extract_answer(response) is not None:
            termination = "answered"
            records.append(
                RoundRecord(
                    round_index=round_index,
                    query=query,
                    haystack_digest=haystack.digest(),
                    member_count=len(haystack.members),
                    prompt_sha256=_prompt_sha(prompt),
                    response=response,
                    summary=None,
                    refined_question=None,
                    parse_fallback=False,
                    is_final_answer=True,
                )
            )
            final_response = response
            break

        parsed = parse_intermediate(response)
        if parsed is None:
            analyses.append(response)
            records.append(
                RoundRecord(
                    round_index=round_index,
                    query=query,
                    haystack_digest=haystack.digest(),
                    member_count=len(haystack.members),
                    prompt_sha256=_prompt_sha(prompt),
                    response=response,
                    summary=None,
                    refined_question=None,
                    parse_fallback=True,
                    is_final_answer=False,
                )
            )
        else:
            summary, refined = parsed
            analyses.append(summary)
            records.append(
                RoundRecord(
                    round_index=round_index,
                    query=query,
                    haystack_digest=haystack.digest(),
                    member_count=len(haystack.members),
                    prompt_sha256=_prompt_sha(prompt),
                    response=response,
                    summary=summary,
                    refined_question=refined,
                    parse_fallback=False,
                    is_final_answer=False,
                )
            )
            query = refined

    assert final_haystack is not None
    trace = DynamicTrace(
        sample_id=sample.sample_id,
        mode=mode.tag,
        termination=termination,
        rounds=tuple(records),
    )
    result = _result(
        sample,
        retriever,
        final_haystack,
        mode.tag,
        len(records),
        final_response,
        strict,
    )
    return result, trace
