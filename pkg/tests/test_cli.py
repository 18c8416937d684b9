import json
from pathlib import Path

import pytest

from haybench.cli import main
from haybench.corpus import load_saved_corpus


@pytest.fixture()
def index_path(planted_paths, tmp_path):
    corpus_path, _ = planted_paths
    out = tmp_path / "corpus.idx"
    code = main(["ingest", "--corpus", str(corpus_path), "--out", str(out)])
    assert code == 0
    return out


def test_ingest_reports_and_round_trips(planted_paths, tmp_path, capsys):
    corpus_path, qa_path = planted_paths
    out = tmp_path / "corpus.idx"
    code = main(
        ["ingest", "--corpus", str(corpus_path), "--qa", str(qa_path), "--out", str(out)]
    )
    assert code == 0
    lines = capsys.readouterr().out
    assert "kept 1000 of 1000 records" in lines
    assert '"2": 50' in lines or "qa: 50 samples" in lines
    corpus = load_saved_corpus(out, expected_tokenizer="reference")
    assert len(corpus) == 1000
    assert corpus.graph.num_edges == 50


def test_retrieve_then_rerank(index_path, planted_paths, tmp_path, capsys):
    _, qa_path = planted_paths
    ranked_path = tmp_path / "ranked.jsonl"
    code = main(
        [
            "retrieve",
            "--corpus",
            str(index_path),
            "--qa",
            str(qa_path),
            "--strategy",
            "bm25",
            "--out",
            str(ranked_path),
        ]
    )
    assert code == 0
    rows = [json.loads(l) for l in ranked_path.read_text().splitlines()]
    assert len(rows) == 50
    first = rows[0]
    assert first["strategy"] == "bm25"
    assert first["entries"][0][0] == "a00"
    assert all(entry[0] != "b00" for entry in first["entries"])

    reranked_path = tmp_path / "reranked.jsonl"
    code = main(
        [
            "rerank",
            "--corpus",
            str(index_path),
            "--rankings",
            str(ranked_path),
            "--out",
            str(reranked_path),
        ]
    )
    assert code == 0
    rows = [json.loads(l) for l in reranked_path.read_text().splitlines()]
    first = rows[0]
    assert first["strategy"] == "bm25+ppr"
    top20 = [entry[0] for entry in first["entries"][:20]]
    assert "a00" in top20
    assert "b00" in top20


def test_build_haystack_parses_budget_suffix(index_path, planted_paths, tmp_path):
    _, qa_path = planted_paths
    out = tmp_path / "haystacks.jsonl"
    code = main(
        [
            "build-haystack",
            "--corpus",
            str(index_path),
            "--qa",
            str(qa_path),
            "--strategy",
            "bm25",
            "--budget",
            "1K",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    rows = [json.loads(l) for l in out.read_text().splitlines()]
    assert len(rows) == 50
    for row in rows[:3]:
        assert row["budget"] == 1024
        assert row["total_tokens"] <= 1024
        needles = [m for m in row["members"] if m["is_needle"]]
        assert len(needles) == 2
        truncated = [m for m in row["members"] if m["was_truncated"]]
        assert len(truncated) <= 1


def test_eval_retrieval_outputs(index_path, planted_paths, tmp_path, capsys):
    _, qa_path = planted_paths
    out_dir = tmp_path / "ret"
    code = main(
        [
            "eval-retrieval",
            "--corpus",
            str(index_path),
            "--qa",
            str(qa_path),
            "--strategies",
            "bm25,bm25+ppr",
            "--cutoffs",
            "10,20",
            "--limit",
            "10",
            "--out-dir",
            str(out_dir),
        ]
    )
    assert code == 0
    report = json.loads((out_dir / "retrieval.json").read_text())
    assert report["sample_count"] == 10
    assert report["recall"]["bm25+ppr"]["20"] > report["recall"]["bm25"]["20"]
    assert (out_dir / "retrieval.csv").exists()
    assert (out_dir / "retrieval.png").read_bytes()[:4] == b"\x89PNG"
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["command"] == "eval-retrieval"
    assert len(manifest["corpus_sha256"]) == 64
    table = capsys.readouterr().out
    assert "bm25+ppr" in table


def test_eval_static_with_oracle(index_path, planted_paths, tmp_path):
    _, qa_path = planted_paths
    out_dir = tmp_path / "static"
    code = main(
        [
            "eval-static",
            "--corpus",
            str(index_path),
            "--qa",
            str(qa_path),
            "--strategies",
            "bm25",
            "--budgets",
            "1K",
            "--limit",
            "4",
            "--client",
            "oracle",
            "--oracle-visibility",
            "25",
            "--out-dir",
            str(out_dir),
        ]
    )
    assert code == 0
    rows = [json.loads(l) for l in (out_dir / "results.jsonl").read_text().splitlines()]
    assert len(rows) == 4
    assert all(r["f1"] == 1.0 for r in rows)
    assert all(r["mode"] == "static" for r in rows)
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["client"] == {"kind": "oracle", "model": "visibility:25"}
    assert manifest["budgets"] == [1024]


def test_eval_static_no_context(index_path, planted_paths, tmp_path):
    _, qa_path = planted_paths
    out_dir = tmp_path / "none"
    code = main(
        [
            "eval-static",
            "--corpus",
            str(index_path),
            "--qa",
            str(qa_path),
            "--limit",
            "2",
            "--no-context",
            "--client",
            "oracle",
            "--out-dir",
            str(out_dir),
        ]
    )
    assert code == 0
    rows = [json.loads(l) for l in (out_dir / "results.jsonl").read_text().splitlines()]
    assert all(r["retriever"] == "none" for r in rows)
    assert all(r["budget"] == 0 for r in rows)
    assert all(r["f1"] == 0.0 for r in rows)


def _write_dynamic_scripts(path: Path, sample_ids):
    rows = []
    for sid in sample_ids:
        gold = f"bval{sid[1:]}"
        rows.append(
            {
                "sample_id": sid,
                "responses": [
                    f"Summary: chasing {sid}\nRefined Question: where is {gold}?",
                    f"The correct answer is {gold}.",
                ],
            }
        )
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")


def test_eval_dynamic_scripted_runs_are_byte_identical(
    index_path, planted_paths, tmp_path
):
    _, qa_path = planted_paths
    scripts = tmp_path / "scripts.jsonl"
    _write_dynamic_scripts(scripts, ["s00", "s01"])
    outs = []
    for name in ("run1", "run2"):
        out_dir = tmp_path / name
        code = main(
            [
                "eval-dynamic",
                "--corpus",
                str(index_path),
                "--qa",
                str(qa_path),
                "--strategies",
                "bm25",
                "--budgets",
                "1K",
                "--limit",
                "2",
                "--mode",
                "enforced",
                "--rounds",
                "2",
                "--client",
                "scripted",
                "--responses",
                str(scripts),
                "--out-dir",
                str(out_dir),
            ]
        )
        assert code == 0
        outs.append(out_dir)
    for name in ("results.jsonl", "traces.jsonl", "manifest.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    rows = [json.loads(l) for l in (outs[0] / "results.jsonl").read_text().splitlines()]
    assert all(r["f1"] == 1.0 for r in rows)
    assert all(r["mode"] == "enforced:2" for r in rows)
    traces = [json.loads(l) for l in (outs[0] / "traces.jsonl").read_text().splitlines()]
    assert all(t["termination"] == "answered" for t in traces)
    assert all(len(t["rounds"]) == 2 for t in traces)
    assert all(t["rounds"][1]["is_final_answer"] for t in traces)


def test_report_command(index_path, planted_paths, tmp_path, capsys):
    _, qa_path = planted_paths
    results_dir = tmp_path / "static"
    main(
        [
            "eval-static",
            "--corpus",
            str(index_path),
            "--qa",
            str(qa_path),
            "--strategies",
            "bm25",
            "--budgets",
            "1K,2K",
            "--limit",
            "3",
            "--client",
            "oracle",
            "--oracle-visibility",
            "25",
            "--out-dir",
            str(results_dir),
        ]
    )
    capsys.readouterr()
    out_dir = tmp_path / "report"
    code = main(
        [
            "report",
            "--results",
            str(results_dir / "results.jsonl"),
            "--out-dir",
            str(out_dir),
        ]
    )
    assert code == 0
    stdout = capsys.readouterr().out
    assert "retriever" in stdout and "bm25" in stdout
    assert (out_dir / "report.json").exists()
    assert (out_dir / "report.csv").exists()
    assert (out_dir / "f1_by_budget.png").read_bytes()[:4] == b"\x89PNG"


def test_set_override_changes_config_digest(index_path, planted_paths, tmp_path):
    _, qa_path = planted_paths
    digests = []
    for flags, name in ((["--set", "retrieval.k1=1.6"], "a"), ([], "b")):
        out_dir = tmp_path / name
        code = main(
            flags
            + [
                "eval-retrieval",
                "--corpus",
                str(index_path),
                "--qa",
                str(qa_path),
                "--strategies",
                "bm25",
                "--cutoffs",
                "10",
                "--limit",
                "2",
                "--out-dir",
                str(out_dir),
            ]
        )
        assert code == 0
        digests.append(json.loads((out_dir / "manifest.json").read_text())["config_sha256"])
    assert digests[0] != digests[1]


def test_error_paths(tmp_path, capsys):
    code = main(["ingest", "--corpus", str(tmp_path / "missing.jsonl"), "--out", "x"])
    assert code == 1
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_eval_dynamic_rejects_static_mode(index_path, planted_paths, tmp_path, capsys):
    _, qa_path = planted_paths
    code = main(
        [
            "--set",
            "eval.mode=static",
            "eval-dynamic",
            "--corpus",
            str(index_path),
            "--qa",
            str(qa_path),
            "--client",
            "oracle",
            "--out-dir",
            str(tmp_path / "x"),
        ]
    )
    assert code == 1
    assert "enforced or variable" in capsys.readouterr().err


def test_unknown_strategy_is_a_clean_failure(index_path, planted_paths, tmp_path, capsys):
    _, qa_path = planted_paths
    code = main(
        [
            "eval-retrieval",
            "--corpus",
            str(index_path),
            "--qa",
            str(qa_path),
            "--strategies",
            "tfidf",
            "--out-dir",
            str(tmp_path / "x"),
        ]
    )
    assert code == 1
    assert "strategy" in capsys.readouterr().err
