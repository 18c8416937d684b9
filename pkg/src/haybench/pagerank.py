"""Personalized PageRank over the hyperlink graph, used to rerank retrieval.

The walk restarts at a uniform distribution over seed nodes. Power iteration
runs on the cached sparse transition matrix; mass leaving dangling nodes is
redistributed to the seed distribution, so the vector stays a probability
distribution at every step:

    p  <-  (1 - d) * s  +  d * (PT @ p + (dangling mass) * s)

Iteration stops when the L1 change drops below tolerance or after the
iteration cap. Damping 0 returns the seed distribution exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .corpus import HyperlinkGraph
from .errors import ValidationError
from .retrieval import RankedList

RETRIEVER_PPR_DEFAULTS: dict[str, tuple[int, float]] = {
    # strategy -> (seed count, damping)
    "bm25": (10, 0.5),
    "dense": (5, 0.5),
    "hybrid": (5, 0.85),
}


@dataclass(frozen=True)
class PprConfig:
    seed_count: int
    damping: float
    tolerance: float = 1e-8
    max_iterations: int = 100
    symmetrize: bool = False

    def __post_init__(self):
        if not 0.0 <= self.damping < 1.0:
            raise ValidationError(f"damping {self.damping} not in [0, 1)")
        if self.seed_count < 1:
            raise ValidationError(f"seed count {self.seed_count} < 1")
        if self.tolerance <= 0.0:
            raise ValidationError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValidationError("iteration cap must be positive")

    @classmethod
    def for_strategy(cls, strategy: str, **overrides) -> "PprConfig":
        base = strategy.removesuffix("+ppr")
        if base not in RETRIEVER_PPR_DEFAULTS:
            raise ValidationError(f"no reranking defaults for strategy {base!r}")
        seed_count, damping = RETRIEVER_PPR_DEFAULTS[base]
        params = {"seed_count": seed_count, "damping": damping}
        params.update(overrides)
        return cls(**params)


@dataclass(frozen=True)
class PprVector:
    """A full probability distribution over graph nodes."""

    mass: Mapping[str, float]
    iterations: int
    converged: bool

    def __post_init__(self):
        total = 0.0
        for doc_id, value in self.mass.items():
            if value < 0.0:
                raise ValidationError(f"negative mass on {doc_id!r}")
            total += value
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"mass sums to {total!r}, not 1")

    def __getitem__(self, doc_id: str) -> float:
        return self.mass[doc_id]


def personalized_pagerank(
    graph: HyperlinkGraph,
    seeds: Iterable[str],
    config: PprConfig,
) -> PprVector:
    seed_list = list(dict.fromkeys(seeds))
    if not seed_list:
        raise ValidationError("empty seed set")
    missing = [s for s in seed_list if s not in graph.node_index]
    if missing:
        raise ValidationError(f"seeds not in graph: {', '.join(missing)}")

    n = graph.num_nodes
    restart = np.zeros(n)
    for doc_id in seed_list:
        restart[graph.node_index[doc_id]] = 1.0 / len(seed_list)

    if config.damping == 0.0:
        mass = {doc_id: float(restart[i]) for i, doc_id in enumerate(graph.nodes)}
        return PprVector(mass=mass, iterations=0, converged=True)

    transition = graph.transition_transpose(config.symmetrize)
    dangling = graph.dangling_mask(config.symmetrize)
    p = restart.copy()
    iterations = 0
    converged = False
    for iterations in range(1, config.max_iterations + 1):
        pushed = transition @ p
        lost = float(p[dangling].sum())
        updated = (1.0 - config.damping) * restart + config.damping * (
            pushed + lost * restart
        )
        delta = float(np.abs(updated - p).sum())
        p = updated
        if delta < config.tolerance:
            converged = True
            break
    p = p / p.sum()
    mass = {doc_id: float(p[i]) for i, doc_id in enumerate(graph.nodes)}
    return PprVector(mass=mass, iterations=iterations, converged=converged)


def rerank_ppr(
    base: RankedList,
    graph: HyperlinkGraph,
    config: PprConfig | None = None,
    top_n: int | None = None,
) -> RankedList:
    """Rerank by walk mass seeded from the head of a base list.

    Seeds are the top ``seed_count`` base documents that exist in the graph.
    The walk can surface documents the base retrieval never scored, so the
    result covers every node with positive mass plus the rest of the base
    list: positive-mass documents first (mass descending, ties by base rank
    then doc_id), then the zero-mass base documents in base order with
    score 0.
    """
    if config is None:
        config = PprConfig.for_strategy(base.strategy)
    if not base.entries:
        return RankedList(query_id=base.query_id, strategy=f"{base.strategy}+ppr", entries=())
    seeds = [doc_id for doc_id in base.doc_ids() if doc_id in graph.node_index][
        : config.seed_count
    ]
    if not seeds:
        raise ValidationError(
            f"{base.query_id}: no ranked document exists in the graph"
        )
    vector = personalized_pagerank(graph, seeds, config)
    base_rank = {doc_id: rank for doc_id, _, rank in base.entries}
    unranked = len(base_rank) + 1
    positive = sorted(
        (doc_id for doc_id, mass in vector.mass.items() if mass > 0.0),
        key=lambda doc_id: (
            -vector.mass[doc_id],
            base_rank.get(doc_id, unranked),
            doc_id,
        ),
    )
    covered = set(positive)
    tail = [doc_id for doc_id in base.doc_ids() if doc_id not in covered]
    ordered = positive + tail
    if top_n is not None:
        ordered = ordered[:top_n]
    entries = tuple(
        (doc_id, float(vector.mass.get(doc_id, 0.0)), rank)
        for rank, doc_id in enumerate(ordered, start=1)
    )
    return RankedList(
        query_id=base.query_id, strategy=f"{base.strategy}+ppr", entries=entries
    )
