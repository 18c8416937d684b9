import random

import numpy as np
import pytest

from haybench.corpus import HyperlinkGraph
from haybench.errors import ValidationError
from haybench.pagerank import (
    RETRIEVER_PPR_DEFAULTS,
    PprConfig,
    PprVector,
    personalized_pagerank,
    rerank_ppr,
)
from haybench.retrieval import RankedList


def solve_oracle(graph, seeds, damping):
    """Direct linear solve of the stationary condition. Dangling columns
    are replaced by the restart distribution, then
    (I - d * PT) p = (1 - d) * s is solved densely."""
    n = graph.num_nodes
    s = np.zeros(n)
    for doc_id in seeds:
        s[graph.node_index[doc_id]] = 1.0 / len(seeds)
    pt = graph.transition_transpose().toarray()
    for j in np.where(graph.dangling_mask())[0]:
        pt[:, j] = s
    p = np.linalg.solve(np.eye(n) - damping * pt, (1.0 - damping) * s)
    return p / p.sum()


def random_graph(rng, max_nodes=20):
    n = rng.randint(2, max_nodes)
    nodes = [f"n{i:02d}" for i in range(n)]
    edges = set()
    for _ in range(rng.randint(0, 3 * n)):
        src, dst = rng.sample(nodes, 2)
        edges.add((src, dst))
    return HyperlinkGraph(nodes, edges)


def test_two_node_cycle_hand_case():
    graph = HyperlinkGraph(["a", "b"], [("a", "b"), ("b", "a")])
    config = PprConfig(seed_count=1, damping=0.5, tolerance=1e-12)
    vector = personalized_pagerank(graph, ["a"], config)
    assert vector["a"] == pytest.approx(2.0 / 3.0, abs=1e-9)
    assert vector["b"] == pytest.approx(1.0 / 3.0, abs=1e-9)
    assert vector.converged


@pytest.mark.parametrize("damping", [0.0, 0.5, 0.85])
@pytest.mark.parametrize("seed", range(6))
def test_power_iteration_matches_linear_solve(seed, damping):
    rng = random.Random(seed * 100 + int(damping * 100))
    graph = random_graph(rng)
    seeds = rng.sample(graph.nodes, rng.randint(1, min(4, graph.num_nodes)))
    config = PprConfig(seed_count=len(seeds), damping=damping, tolerance=1e-12)
    vector = personalized_pagerank(graph, seeds, config)
    want = solve_oracle(graph, seeds, damping)
    total = 0.0
    for i, doc_id in enumerate(graph.nodes):
        assert vector[doc_id] == pytest.approx(want[i], abs=1e-6)
        assert vector[doc_id] >= 0.0
        total += vector[doc_id]
    assert total == pytest.approx(1.0, abs=1e-9)


def test_damping_zero_returns_seed_distribution():
    graph = HyperlinkGraph(["a", "b", "c"], [("a", "b")])
    config = PprConfig(seed_count=2, damping=0.0)
    vector = personalized_pagerank(graph, ["a", "c"], config)
    assert vector["a"] == 0.5
    assert vector["c"] == 0.5
    assert vector["b"] == 0.0
    assert vector.iterations == 0


def test_seed_validation():
    graph = HyperlinkGraph(["a", "b"], [("a", "b")])
    config = PprConfig(seed_count=1, damping=0.5)
    with pytest.raises(ValidationError, match="empty seed"):
        personalized_pagerank(graph, [], config)
    with pytest.raises(ValidationError, match="not in graph"):
        personalized_pagerank(graph, ["zz"], config)


def test_config_validation():
    with pytest.raises(ValidationError):
        PprConfig(seed_count=1, damping=1.0)
    with pytest.raises(ValidationError):
        PprConfig(seed_count=0, damping=0.5)
    with pytest.raises(ValidationError):
        PprConfig(seed_count=1, damping=0.5, tolerance=0.0)
    with pytest.raises(ValidationError):
        PprConfig(seed_count=1, damping=0.5, max_iterations=0)


def test_defaults_per_strategy():
    assert RETRIEVER_PPR_DEFAULTS == {
        "bm25": (10, 0.5),
        "dense": (5, 0.5),
        "hybrid": (5, 0.85),
    }
    config = PprConfig.for_strategy("bm25+ppr")
    assert (config.seed_count, config.damping) == (10, 0.5)
    config = PprConfig.for_strategy("hybrid", damping=0.3)
    assert (config.seed_count, config.damping) == (5, 0.3)
    with pytest.raises(ValidationError, match="no reranking defaults"):
        PprConfig.for_strategy("mystery")


def test_vector_validation():
    with pytest.raises(ValidationError, match="negative"):
        PprVector(mass={"a": -0.1, "b": 1.1}, iterations=1, converged=True)
    with pytest.raises(ValidationError, match="sums to"):
        PprVector(mass={"a": 0.7}, iterations=1, converged=True)


def test_iteration_cap_reported():
    # a 3-cycle mixes slowly enough that one iteration cannot converge
    graph = HyperlinkGraph(
        ["a", "b", "c"], [("a", "b"), ("b", "c"), ("c", "a")]
    )
    config = PprConfig(seed_count=1, damping=0.85, tolerance=1e-15, max_iterations=1)
    vector = personalized_pagerank(graph, ["a"], config)
    assert not vector.converged
    assert vector.iterations == 1


def test_rerank_surfaces_linked_documents():
    # base retrieval sees hub1/hub2 only; spoke is reachable by link alone
    graph = HyperlinkGraph(
        ["hub1", "hub2", "spoke", "isle"],
        [("hub1", "spoke"), ("hub2", "spoke")],
    )
    base = RankedList.from_scores("q", "bm25", {"hub1": 3.0, "hub2": 2.0, "isle": 1.0})
    config = PprConfig(seed_count=2, damping=0.5)
    reranked = rerank_ppr(base, graph, config)
    assert reranked.strategy == "bm25+ppr"
    ids = reranked.doc_ids()
    assert "spoke" in ids
    assert ids.index("spoke") < ids.index("isle")
    # zero-mass base documents keep base order with score zero
    assert reranked.entries[-1][0] == "isle"
    assert reranked.entries[-1][1] == 0.0
    # ranked scores are the walk masses, descending
    scores = [s for _, s, _ in reranked.entries]
    assert scores == sorted(scores, reverse=True)


def test_rerank_ties_respect_base_rank_then_doc_id():
    # two symmetric seeds get identical mass; base order decides
    graph = HyperlinkGraph(["x", "y"], [])
    base = RankedList.from_scores("q", "bm25", {"y": 2.0, "x": 1.0})
    config = PprConfig(seed_count=2, damping=0.5)
    reranked = rerank_ppr(base, graph, config)
    assert reranked.doc_ids() == ["y", "x"]


def test_rerank_top_n_and_empty_base():
    graph = HyperlinkGraph(["a", "b", "c"], [("a", "b"), ("b", "c")])
    base = RankedList.from_scores("q", "bm25", {"a": 1.0})
    config = PprConfig(seed_count=1, damping=0.5)
    capped = rerank_ppr(base, graph, config, top_n=2)
    assert len(capped) == 2
    empty = RankedList.from_scores("q", "bm25", {})
    assert len(rerank_ppr(empty, graph, config)) == 0
    off_graph = RankedList.from_scores("q", "bm25", {"zz": 1.0})
    with pytest.raises(ValidationError, match="no ranked document"):
        rerank_ppr(off_graph, graph, config)
