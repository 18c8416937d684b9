import math

import pytest

from haybench.errors import ValidationError
from haybench.metrics import (
    answer_f1,
    compute_retrieval_report,
    ndcg_at_n,
    normalize_answer,
    recall_at_n,
)
from haybench.retrieval import RankedList


def ranked(ids):
    scores = {d: float(len(ids) - i) for i, d in enumerate(ids)}
    return RankedList.from_scores("q", "bm25", scores)


def test_recall_hand_cases():
    lst = ranked(["a", "b", "c", "d", "e"])
    assert recall_at_n(lst, ["b", "d"], 5) == 1.0
    assert recall_at_n(lst, ["b", "d"], 3) == 0.5
    assert recall_at_n(lst, ["b", "d"], 1) == 0.0
    assert recall_at_n(lst, ["zz"], 5) == 0.0
    # cutoff beyond list length is allowed
    assert recall_at_n(lst, ["e"], 100) == 1.0


def test_ndcg_hand_case_hits_at_ranks_two_and_four():
    lst = ranked(["a", "b", "c", "d", "e"])
    got = ndcg_at_n(lst, ["b", "d"], 5)
    dcg = 1.0 / math.log2(3) + 1.0 / math.log2(5)
    idcg = 1.0 + 1.0 / math.log2(3)
    assert got == pytest.approx(dcg / idcg, abs=1e-12)
    assert got == pytest.approx(0.6510, abs=1e-4)


def test_ndcg_boundaries():
    lst = ranked(["a", "b", "c"])
    assert ndcg_at_n(lst, ["a"], 3) == 1.0
    assert ndcg_at_n(lst, ["a", "b"], 3) == 1.0
    assert ndcg_at_n(lst, ["zz"], 3) == 0.0
    # more needles than the cutoff: ideal gain only counts n slots
    assert ndcg_at_n(lst, ["a", "b", "c"], 1) == 1.0


def test_metric_input_validation():
    lst = ranked(["a"])
    with pytest.raises(ValidationError):
        recall_at_n(lst, [], 5)
    with pytest.raises(ValidationError):
        recall_at_n(lst, ["a"], 0)
    with pytest.raises(ValidationError):
        ndcg_at_n(lst, [], 5)
    with pytest.raises(ValidationError):
        ndcg_at_n(lst, ["a"], 0)


def test_normalize_answer():
    assert normalize_answer("The Firth of Forth!") == "firth of forth"
    assert normalize_answer("A  B   C") == "b c"
    assert normalize_answer("don't") == "dont"
    assert normalize_answer("An apple; a day.") == "apple day"
    assert normalize_answer("") == ""


def test_f1_article_and_punctuation_invariance():
    score = answer_f1("the Firth of Forth", "Firth of Forth")
    assert score.f1 == 1.0
    assert score.exact_match


def test_f1_partial_date_overlap():
    score = answer_f1("15 November 1889", "1889")
    assert score.precision == pytest.approx(1.0 / 3.0)
    assert score.recall == 1.0
    assert score.f1 == pytest.approx(0.5)
    assert not score.exact_match


def test_f1_aliases_take_best():
    score = answer_f1("NYC", "New York City", aliases=["NYC", "The Big Apple"])
    assert score.f1 == 1.0
    assert score.exact_match
    score = answer_f1("totally wrong", "New York City", aliases=["NYC"])
    assert score.f1 == 0.0


def test_f1_empty_edge_cases():
    assert answer_f1("", "").f1 == 1.0
    assert answer_f1("", "x").f1 == 0.0
    assert answer_f1("x", "").f1 == 0.0
    # normalization can empty a non-empty string
    assert answer_f1("the", "the").f1 == 1.0


def test_f1_repeated_tokens_use_bag_overlap():
    score = answer_f1("x x y", "x y y")
    assert score.precision == pytest.approx(2.0 / 3.0)
    assert score.recall == pytest.approx(2.0 / 3.0)


def test_retrieval_report(tmp_path):
    rankings = {
        "bm25": {"s1": ranked(["a", "b", "c"]), "s2": ranked(["c", "a", "b"])},
        "bm25+ppr": {"s1": ranked(["b", "a", "c"]), "s2": ranked(["a", "c", "b"])},
    }
    needles = {"s1": ["b"], "s2": ["a"]}
    report = compute_retrieval_report(rankings, needles, cutoffs=(1, 2))
    assert report.sample_count == 2
    assert report.recall["bm25"][1] == 0.0
    assert report.recall["bm25"][2] == 1.0
    assert report.recall["bm25+ppr"][1] == pytest.approx(1.0)
    assert report.ndcg["bm25+ppr"][1] == 1.0
    assert report.ndcg["bm25"][2] == pytest.approx(1.0 / math.log2(3))

    report.write_csv(tmp_path / "r.csv")
    report.write_json(tmp_path / "r.json")
    lines = (tmp_path / "r.csv").read_text().strip().splitlines()
    assert lines[0] == "strategy,n,recall,ndcg"
    assert len(lines) == 1 + 4

    with pytest.raises(ValidationError, match="missing rankings"):
        compute_retrieval_report({"bm25": {"s1": ranked(["a"])}}, needles, (1,))
    with pytest.raises(ValidationError, match="no samples"):
        compute_retrieval_report({}, {}, (1,))
