"""Command-line interface.

Subcommands cover the pipeline end to end: ``ingest`` builds the binary
corpus index, ``index`` computes embeddings through an endpoint,
``retrieve``/``rerank``/``build-haystack`` expose the intermediate
artifacts as JSON lines, ``eval-retrieval`` scores rankings,
``eval-static``/``eval-dynamic`` run a model over assembled haystacks, and
``report`` aggregates result files into tables and figures.

Evaluation commands write ``results.jsonl`` (one scored sample per line,
keys sorted), ``traces.jsonl`` for dynamic runs, and ``manifest.json``
recording input digests and the effective configuration. Nothing
timestamped goes into those files, so identical inputs produce identical
bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .clients import EmbeddingEndpointClient, HttpModelClient, NeedleOracleClient, ScriptedClient
from .config import (
    apply_overrides,
    config_digest,
    load_config,
    parse_token_budget,
)
from .corpus import (
    INDEX_MAGIC,
    Corpus,
    hop_histogram,
    load_corpus,
    load_qa_samples,
    load_saved_corpus,
    save_corpus,
)
from .errors import ConfigError, HaybenchError
from .harness import DynamicMode
from .haystack import OrderingPolicy
from .metrics import compute_retrieval_report
from .pagerank import PprConfig, rerank_ppr
from .pipeline import Pipeline, split_strategy
from .report import (
    aggregate,
    load_results,
    plot_retrieval_report,
    render_table,
    write_report,
)
from .retrieval import (
    EmbeddingStore,
    RankedList,
    build_sparse_index,
    load_embeddings,
    save_embeddings,
)
from .tokenizers import get_tokenizer


def _file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_jsonl(path: Path, rows) -> None:
    with path.open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def _load_corpus_any(path: str, tokenizer_selector: str) -> Corpus:
    """Accept either a prebuilt binary index or a raw JSONL corpus."""
    raw = Path(path)
    with raw.open("rb") as handle:
        head = handle.read(len(INDEX_MAGIC))
    if head == INDEX_MAGIC:
        # The selector string and the tokenizer's self-reported name coincide.
        return load_saved_corpus(raw, expected_tokenizer=tokenizer_selector)
    return load_corpus(raw, get_tokenizer(tokenizer_selector))


def _pipeline_from(config: dict, corpus: Corpus, args) -> Pipeline:
    tokenizer = get_tokenizer(config["corpus"]["tokenizer"])
    retrieval = config["retrieval"]
    store = None
    queries = None
    embed_client = None
    if retrieval["embeddings"]:
        store = load_embeddings(retrieval["embeddings"])
    if retrieval["query_embeddings"]:
        queries = load_embeddings(retrieval["query_embeddings"])
    if retrieval["embed_endpoint"]:
        embed_client = EmbeddingEndpointClient(retrieval["embed_endpoint"])
    return Pipeline(
        corpus=corpus,
        tokenizer=tokenizer,
        sparse_index=build_sparse_index(corpus, k1=retrieval["k1"], b=retrieval["b"]),
        embedding_store=store,
        query_vectors=queries,
        embed_client=embed_client,
        rrf_k=retrieval["rrf_k"],
        ppr_overrides=config.get("ppr", {}),
        top_n=retrieval["top_n"],
    )


def _make_client(config: dict, args, corpus: Corpus | None, samples) -> tuple[object, dict]:
    kind = args.client
    if kind == "http":
        model = config["model"]
        if not model["endpoint"] or not model["name"]:
            raise ConfigError("http client needs model.endpoint and model.name")
        client = HttpModelClient(
            endpoint=model["endpoint"],
            model=model["name"],
            temperature=model["temperature"],
            top_p=model["top_p"],
            max_tokens=model["max_tokens"],
        )
        return client, {"kind": "http", "model": model["name"]}
    if kind == "scripted":
        if not args.responses:
            raise ConfigError("scripted client needs --responses")
        responses: dict[str, list[str]] = {}
        with open(args.responses, encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    row = json.loads(line)
                    responses[str(row["sample_id"])] = [str(r) for r in row["responses"]]
        return ScriptedClient(responses), {"kind": "scripted", "model": ""}
    if kind == "oracle":
        assert corpus is not None
        titles = {
            s.sample_id: [corpus.documents[n].title for n in s.needle_ids]
            for s in samples
        }
        gold = {s.sample_id: s.gold_answer for s in samples}
        client = NeedleOracleClient(titles, gold, visibility_limit=args.oracle_visibility)
        return client, {"kind": "oracle", "model": f"visibility:{args.oracle_visibility}"}
    raise ConfigError(f"unknown client kind {kind!r}")


def _ordering_policies(config: dict, args) -> list[OrderingPolicy]:
    ordering = args.ordering or config["eval"]["ordering"]
    if ordering == "ranked":
        return [OrderingPolicy(kind="ranked")]
    seeds = args.seeds or config["eval"]["seeds"]
    return [OrderingPolicy(kind="random", seed=int(s)) for s in seeds]


def _budgets(config: dict, args) -> list[int]:
    if args.budgets:
        return [parse_token_budget(part) for part in args.budgets.split(",")]
    return [int(b) for b in config["eval"]["budgets"]]


def _strategies(config: dict, args) -> list[str]:
    if args.strategies:
        return [part.strip() for part in args.strategies.split(",") if part.strip()]
    return list(config["retrieval"]["strategies"])


def _manifest(config: dict, args, extra: dict) -> dict:
    manifest = {
        "version": __version__,
        "config_sha256": config_digest(config),
        "corpus_sha256": _file_digest(args.corpus),
        "qa_sha256": _file_digest(args.qa),
        "tokenizer": config["corpus"]["tokenizer"],
    }
    manifest.update(extra)
    return manifest


def _write_manifest(out_dir: Path, manifest: dict) -> None:
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def cmd_ingest(args, config: dict) -> int:
    tokenizer = get_tokenizer(args.tokenizer or config["corpus"]["tokenizer"])
    corpus = load_corpus(args.corpus, tokenizer)
    save_corpus(corpus, args.out)
    stats = corpus.stats
    print(f"kept {stats.kept} of {stats.records_total} records")
    print(
        f"dropped: {stats.dropped_empty} empty, {stats.dropped_redirect} redirects"
    )
    print(
        f"links removed: {stats.self_links_removed} self, "
        f"{stats.duplicate_links_removed} duplicate, "
        f"{stats.dangling_links_removed} dangling"
    )
    print(f"graph: {corpus.graph.num_nodes} nodes, {corpus.graph.num_edges} edges")
    if args.qa:
        samples = load_qa_samples(args.qa, corpus)
        histogram = hop_histogram(samples)
        print(f"qa: {len(samples)} samples, hops " + json.dumps(histogram))
    print(f"wrote {args.out}")
    return 0


def cmd_index(args, config: dict) -> int:
    corpus = _load_corpus_any(args.corpus, config["corpus"]["tokenizer"])
    endpoint = args.embed_endpoint or config["retrieval"]["embed_endpoint"]
    if not endpoint:
        raise ConfigError("index needs an embedding endpoint")
    client = EmbeddingEndpointClient(endpoint)
    if args.qa:
        samples = load_qa_samples(args.qa, corpus)
        ids = [s.sample_id for s in samples]
        texts = [s.question for s in samples]
    else:
        ids = list(corpus.documents)
        texts = [
            f"{corpus.documents[i].title}\n{corpus.documents[i].body}" for i in ids
        ]
    vectors = []
    for start in range(0, len(texts), args.batch_size):
        vectors.append(client.embed(texts[start : start + args.batch_size]))
    store = EmbeddingStore(ids, np.vstack(vectors))
    save_embeddings(store, args.out)
    print(f"embedded {len(store)} texts (dim {store.dim}) -> {args.out}")
    return 0


def cmd_retrieve(args, config: dict) -> int:
    corpus = _load_corpus_any(args.corpus, config["corpus"]["tokenizer"])
    samples = load_qa_samples(args.qa, corpus)
    pipeline = _pipeline_from(config, corpus, args)
    rows = []
    for sample in samples:
        ranked = pipeline.rank(args.strategy, sample.question, sample.sample_id)
        rows.append(
            {
                "sample_id": sample.sample_id,
                "strategy": ranked.strategy,
                "entries": [[d, s, r] for d, s, r in ranked.entries],
            }
        )
    _write_jsonl(Path(args.out), rows)
    print(f"ranked {len(rows)} queries with {args.strategy} -> {args.out}")
    return 0


def cmd_rerank(args, config: dict) -> int:
    corpus = _load_corpus_any(args.corpus, config["corpus"]["tokenizer"])
    overrides = dict(config.get("ppr", {}))
    if args.seed_count is not None:
        overrides["seed_count"] = args.seed_count
    if args.damping is not None:
        overrides["damping"] = args.damping
    rows = []
    with open(args.rankings, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            row = json.loads(line)
            base = RankedList(
                query_id=str(row["sample_id"]),
                strategy=str(row["strategy"]),
                entries=tuple((d, float(s), int(r)) for d, s, r in row["entries"]),
            )
            ppr_config = PprConfig.for_strategy(base.strategy, **overrides)
            reranked = rerank_ppr(base, corpus.graph, ppr_config)
            rows.append(
                {
                    "sample_id": reranked.query_id,
                    "strategy": reranked.strategy,
                    "entries": [[d, s, r] for d, s, r in reranked.entries],
                }
            )
    _write_jsonl(Path(args.out), rows)
    print(f"reranked {len(rows)} rankings -> {args.out}")
    return 0


def cmd_build_haystack(args, config: dict) -> int:
    corpus = _load_corpus_any(args.corpus, config["corpus"]["tokenizer"])
    samples = load_qa_samples(args.qa, corpus)
    pipeline = _pipeline_from(config, corpus, args)
    if args.ordering == "random":
        policy = OrderingPolicy(kind="random", seed=args.seed)
    else:
        policy = OrderingPolicy(kind="ranked")
    budget = parse_token_budget(args.budget)
    rows = []
    for sample in samples:
        haystack = pipeline.build_haystack(sample, args.strategy, budget, policy)
        rows.append(
            {
                "sample_id": haystack.sample_id,
                "budget": haystack.budget,
                "ordering": haystack.ordering,
                "total_tokens": haystack.total_tokens,
                "digest": haystack.digest(),
                "members": [
                    {
                        "doc_id": m.doc_id,
                        "is_needle": m.is_needle,
                        "was_truncated": m.was_truncated,
                        "tokens": m.tokens,
                        "rank": m.rank,
                    }
                    for m in haystack.members
                ],
            }
        )
    _write_jsonl(Path(args.out), rows)
    print(f"assembled {len(rows)} haystacks at budget {budget} -> {args.out}")
    return 0


def cmd_eval_retrieval(args, config: dict) -> int:
    corpus = _load_corpus_any(args.corpus, config["corpus"]["tokenizer"])
    samples = load_qa_samples(args.qa, corpus)
    if args.limit:
        samples = samples[: args.limit]
    pipeline = _pipeline_from(config, corpus, args)
    strategies = _strategies(config, args)
    cutoffs = (
        [int(part) for part in args.cutoffs.split(",")]
        if args.cutoffs
        else [int(n) for n in config["eval"]["cutoffs"]]
    )
    rankings = {
        tag: {
            s.sample_id: pipeline.rank(tag, s.question, s.sample_id) for s in samples
        }
        for tag in strategies
    }
    needles = {s.sample_id: s.needle_ids for s in samples}
    report = compute_retrieval_report(rankings, needles, cutoffs)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_csv(out_dir / "retrieval.csv")
    report.write_json(out_dir / "retrieval.json")
    plot_retrieval_report(report, out_dir / "retrieval.png")
    _write_manifest(
        out_dir,
        _manifest(config, args, {"command": "eval-retrieval", "strategies": strategies, "cutoffs": cutoffs}),
    )
    width = max(len(s) for s in strategies)
    print(f"{'strategy'.ljust(width)}  n    recall  ndcg")
    for row in report.rows():
        print(
            f"{row['strategy'].ljust(width)}  {str(row['n']).ljust(4)} "
            f"{row['recall']:.4f}  {row['ndcg']:.4f}"
        )
    print(f"wrote {out_dir}/retrieval.{{csv,json,png}}")
    return 0


def cmd_eval_static(args, config: dict) -> int:
    corpus = _load_corpus_any(args.corpus, config["corpus"]["tokenizer"])
    samples = load_qa_samples(args.qa, corpus)
    if args.limit:
        samples = samples[: args.limit]
    pipeline = _pipeline_from(config, corpus, args)
    client, client_info = _make_client(config, args, corpus, samples)
    strict = args.strict or config["eval"]["strict"]
    workers = config["eval"]["workers"]
    rows = []
    if args.no_context:
        results = pipeline.eval_static(
            samples,
            "bm25",
            0,
            OrderingPolicy(kind="ranked"),
            client,
            strict=strict,
            no_context=True,
            workers=workers,
        )
        rows.extend(r.as_dict() for r in results)
        budgets: list[int] = []
        strategies: list[str] = []
        policies = [OrderingPolicy(kind="ranked")]
    else:
        budgets = _budgets(config, args)
        strategies = _strategies(config, args)
        policies = _ordering_policies(config, args)
        for tag in strategies:
            for budget in budgets:
                for policy in policies:
                    results = pipeline.eval_static(
                        samples,
                        tag,
                        budget,
                        policy,
                        client,
                        strict=strict,
                        workers=workers,
                    )
                    rows.extend(r.as_dict() for r in results)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_jsonl(out_dir / "results.jsonl", rows)
    _write_manifest(
        out_dir,
        _manifest(
            config,
            args,
            {
                "command": "eval-static",
                "strategies": strategies,
                "budgets": budgets,
                "orderings": [p.tag for p in policies],
                "mode": "static",
                "no_context": bool(args.no_context),
                "strict": bool(strict),
                "samples": len(samples),
                "client": client_info,
            },
        ),
    )
    errored = sum(1 for r in rows if r["errored"])
    print(f"evaluated {len(rows)} runs over {len(samples)} samples ({errored} errored)")
    print(f"wrote {out_dir}/results.jsonl")
    return 0


def cmd_eval_dynamic(args, config: dict) -> int:
    corpus = _load_corpus_any(args.corpus, config["corpus"]["tokenizer"])
    samples = load_qa_samples(args.qa, corpus)
    if args.limit:
        samples = samples[: args.limit]
    pipeline = _pipeline_from(config, corpus, args)
    client, client_info = _make_client(config, args, corpus, samples)
    mode_kind = args.mode or config["eval"]["mode"]
    if mode_kind == "static":
        raise ConfigError("eval-dynamic needs mode enforced or variable")
    mode = DynamicMode(kind=mode_kind, rounds=args.rounds or config["eval"]["rounds"])
    strict = args.strict or config["eval"]["strict"]
    final_uses_original = args.final_uses_original or config["eval"]["final_uses_original"]
    workers = config["eval"]["workers"]
    budgets = _budgets(config, args)
    strategies = _strategies(config, args)
    policies = _ordering_policies(config, args)
    rows = []
    trace_rows = []
    for tag in strategies:
        for budget in budgets:
            for policy in policies:
                results, traces = pipeline.eval_dynamic(
                    samples,
                    tag,
                    budget,
                    policy,
                    client,
                    mode,
                    final_uses_original=final_uses_original,
                    strict=strict,
                    workers=workers,
                )
                rows.extend(r.as_dict() for r in results)
                for trace in traces:
                    if trace is not None:
                        record = trace.as_dict()
                        record["retriever"] = tag
                        record["budget"] = budget
                        record["ordering"] = policy.tag
                        trace_rows.append(record)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_jsonl(out_dir / "results.jsonl", rows)
    _write_jsonl(out_dir / "traces.jsonl", trace_rows)
    _write_manifest(
        out_dir,
        _manifest(
            config,
            args,
            {
                "command": "eval-dynamic",
                "strategies": strategies,
                "budgets": budgets,
                "orderings": [p.tag for p in policies],
                "mode": mode.tag,
                "final_uses_original": bool(final_uses_original),
                "strict": bool(strict),
                "samples": len(samples),
                "client": client_info,
            },
        ),
    )
    errored = sum(1 for r in rows if r["errored"])
    print(f"evaluated {len(rows)} runs over {len(samples)} samples ({errored} errored)")
    print(f"wrote {out_dir}/results.jsonl and {out_dir}/traces.jsonl")
    return 0


def cmd_report(args, config: dict) -> int:
    rows = load_results(args.results)
    groups = aggregate(rows)
    print(render_table(groups))
    paths = write_report(groups, args.out_dir)
    print(f"wrote {paths['json']}, {paths['csv']}, {paths['figure']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="haybench",
        description="Build and evaluate retriever-dependent haystacks for long-context QA.",
    )
    parser.add_argument("--config", help="TOML configuration file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one configuration value",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a corpus and write the binary index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--qa", help="optional QA file to validate and summarize")
    p.add_argument("--tokenizer", help="tokenizer selector override")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", help="embed documents or questions via an endpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--qa", help="embed these questions instead of documents")
    p.add_argument("--embed-endpoint")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("retrieve", help="rank the corpus for every question")
    p.add_argument("--corpus", required=True)
    p.add_argument("--qa", required=True)
    p.add_argument("--strategy", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("rerank", help="graph-rerank stored rankings")
    p.add_argument("--corpus", required=True)
    p.add_argument("--rankings", required=True)
    p.add_argument("--seed-count", type=int)
    p.add_argument("--damping", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("build-haystack", help="assemble budgeted haystacks")
    p.add_argument("--corpus", required=True)
    p.add_argument("--qa", required=True)
    p.add_argument("--strategy", required=True)
    p.add_argument("--budget", required=True, help="token budget, e.g. 8192 or 8K")
    p.add_argument("--ordering", choices=["ranked", "random"], default="ranked")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_haystack)

    p = sub.add_parser("eval-retrieval", help="recall and NDCG for ranking strategies")
    p.add_argument("--corpus", required=True)
    p.add_argument("--qa", required=True)
    p.add_argument("--strategies", help="comma-separated strategy tags")
    p.add_argument("--cutoffs", help="comma-separated rank cutoffs")
    p.add_argument("--limit", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval_retrieval)

    eval_help = {
        "eval-static": "answer questions over fixed haystacks",
        "eval-dynamic": "answer questions with multi-round query refinement",
    }
    for name, func in (("eval-static", cmd_eval_static), ("eval-dynamic", cmd_eval_dynamic)):
        p = sub.add_parser(name, help=eval_help[name])
        p.add_argument("--corpus", required=True)
        p.add_argument("--qa", required=True)
        p.add_argument("--strategies", help="comma-separated strategy tags")
        p.add_argument("--budgets", help="comma-separated budgets, e.g. 8K,16K")
        p.add_argument("--ordering", choices=["ranked", "random"])
        p.add_argument("--seeds", type=lambda s: [int(x) for x in s.split(",")])
        p.add_argument("--limit", type=int)
        p.add_argument("--strict", action="store_true")
        p.add_argument(
            "--client", choices=["http", "scripted", "oracle"], default="http"
        )
        p.add_argument("--responses", help="JSONL scripts for the scripted client")
        p.add_argument("--oracle-visibility", type=int, default=20)
        p.add_argument("--out-dir", required=True)
        if name == "eval-static":
            p.add_argument("--no-context", action="store_true")
        else:
            p.add_argument("--mode", choices=["enforced", "variable"])
            p.add_argument("--rounds", type=int)
            p.add_argument("--final-uses-original", action="store_true")
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="aggregate result files into tables and figures")
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        if args.overrides:
            config = apply_overrides(config, args.overrides)
        return args.func(args, config)
    except (HaybenchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
