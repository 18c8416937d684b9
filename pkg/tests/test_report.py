import json

import pytest

from haybench.errors import ValidationError
from haybench.metrics import RetrievalReport
from haybench.report import (
    aggregate,
    load_results,
    plot_retrieval_report,
    render_table,
    write_report,
)


def row(sample_id, ordering, f1, retriever="bm25", budget=1024, mode="static", hops=2):
    return {
        "sample_id": sample_id,
        "retriever": retriever,
        "budget": budget,
        "ordering": ordering,
        "mode": mode,
        "hop_count": hops,
        "f1": f1,
        "exact_match": f1 == 1.0,
        "errored": False,
    }


def test_aggregate_collapses_seeds_with_mean_and_spread():
    rows = [
        row("s1", "random:0", 1.0),
        row("s2", "random:0", 0.0),
        row("s1", "random:1", 1.0),
        row("s2", "random:1", 1.0),
        row("s1", "ranked", 0.5),
    ]
    groups = aggregate(rows)
    assert len(groups) == 2
    ranked = next(g for g in groups if g["ordering"] == "ranked")
    random_group = next(g for g in groups if g["ordering"] == "random")
    assert ranked["mean_f1"] == 0.5
    assert ranked["seeds"] == 1
    # seed means are 0.5 and 1.0 -> mean 0.75, population std 0.25
    assert random_group["mean_f1"] == pytest.approx(0.75)
    assert random_group["spread_f1"] == pytest.approx(0.25)
    assert random_group["samples"] == 4
    assert random_group["by_hop"] == {"2": pytest.approx(0.75)}


def test_aggregate_separates_groups():
    rows = [
        row("s1", "ranked", 1.0, retriever="bm25", budget=1024),
        row("s1", "ranked", 0.0, retriever="bm25", budget=2048),
        row("s1", "ranked", 0.5, retriever="bm25+ppr", budget=1024),
        row("s1", "ranked", 0.25, retriever="bm25", budget=1024, mode="enforced:3"),
    ]
    groups = aggregate(rows)
    keys = {(g["retriever"], g["budget"], g["mode"]) for g in groups}
    assert len(keys) == 4


def test_render_table_lists_every_group():
    rows = [row("s1", "ranked", 1.0), row("s1", "ranked", 0.0, budget=2048)]
    table = render_table(aggregate(rows))
    lines = table.splitlines()
    assert lines[0].split()[:3] == ["retriever", "budget", "mode"]
    assert len(lines) == 2 + 2


def test_write_report_outputs(tmp_path):
    rows = [
        row("s1", "ranked", 1.0, budget=1024),
        row("s1", "ranked", 0.5, budget=2048),
        row("s1", "ranked", 0.25, budget=1024, retriever="bm25+ppr"),
    ]
    paths = write_report(aggregate(rows), tmp_path / "out")
    report = json.loads(paths["json"].read_text(encoding="utf-8"))
    assert len(report) == 3
    csv_lines = paths["csv"].read_text(encoding="utf-8").strip().splitlines()
    assert len(csv_lines) == 4
    assert csv_lines[0].startswith("retriever,budget,mode,ordering")
    png = paths["figure"].read_bytes()
    assert png[:8] == b"\x89PNG\r\n\x1a\n"
    assert len(png) > 4000


def test_load_results_roundtrip(tmp_path):
    path = tmp_path / "results.jsonl"
    rows = [row("s1", "ranked", 1.0), row("s2", "ranked", 0.0)]
    path.write_text(
        "".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8"
    )
    assert load_results([path]) == rows
    empty = tmp_path / "empty.jsonl"
    empty.write_text("", encoding="utf-8")
    with pytest.raises(ValidationError, match="no results"):
        load_results([empty])


def test_plot_retrieval_report(tmp_path):
    report = RetrievalReport(
        cutoffs=(10, 20),
        recall={"bm25": {10: 0.4, 20: 0.6}, "bm25+ppr": {10: 0.8, 20: 0.9}},
        ndcg={"bm25": {10: 0.3, 20: 0.5}, "bm25+ppr": {10: 0.7, 20: 0.8}},
        sample_count=5,
    )
    out = tmp_path / "retrieval.png"
    plot_retrieval_report(report, out)
    assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
