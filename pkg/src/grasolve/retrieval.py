"""Graph retrieval: seed entities by similarity, expand one hop, pack text.

`retrieve` embeds the query, finds the top-k Entity nodes by cosine, and
collects every Relation edge incident to a hit plus every Chunk a hit
mentions. `assemble_context` renders that context as budgeted text: triple
lines first, then parent chunk texts, deduplicated, greedily packed whole
lines within a token budget.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from .embeddings import Embedder
from .errors import InvalidParams
from .graph import Direction, EdgeLabel, NodeKind, PropertyGraph
from .textutil import count_tokens


@dataclass
class RetrievalContext:
    query: str
    hits: List[Tuple[str, float]] = field(default_factory=list)
    # (subject name, relation, object name, seed hit score)
    triples: List[Tuple[str, str, str, float]] = field(default_factory=list)
    # (chunk id, chunk text, max seed hit score)
    parents: List[Tuple[str, str, float]] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "query": self.query,
                "hits": [[node_id, score] for node_id, score in self.hits],
                "triples": [list(t) for t in self.triples],
                "parents": [list(p) for p in self.parents],
            },
            ensure_ascii=False,
            sort_keys=True,
        )


def _entity_name(graph: PropertyGraph, node_id: str) -> str:
    name = graph.node(node_id).props.get("name", node_id)
    return name if isinstance(name, str) else str(name)


def retrieve(graph: PropertyGraph, query: str, k: int, embedder: Embedder) -> RetrievalContext:
    """Top-k entity seeds plus their one-hop relations and parent chunks.

    Hits are exact cosine kNN over Entity nodes. Every Relation edge
    touching a hit (either direction) contributes one triple scored by the
    best incident hit; every chunk a hit mentions appears once with the
    best mentioning hit's score. An empty or entity-free graph yields an
    empty context rather than an error.
    """
    if k < 1:
        raise InvalidParams(f"k must be >= 1, got {k}")
    ctx = RetrievalContext(query=query)
    if graph.node_count() == 0:
        return ctx
    qv = embedder.embed(query)
    ctx.hits = graph.knn(qv, k, kind=NodeKind.ENTITY)
    if not ctx.hits:
        return ctx
    score_of = dict(ctx.hits)

    edge_score: Dict[object, float] = {}
    chunk_score: Dict[str, float] = {}
    for hit_id, score in ctx.hits:
        for _, edge in graph.neighbors(hit_id, EdgeLabel.RELATION, Direction.BOTH):
            prev = edge_score.get(edge)
            if prev is None or score > prev:
                edge_score[edge] = score
        for chunk_id, _ in graph.neighbors(hit_id, EdgeLabel.MENTIONS, Direction.OUT):
            prev = chunk_score.get(chunk_id)
            if prev is None or score > prev:
                chunk_score[chunk_id] = score

    triples = [
        (
            _entity_name(graph, edge.src),
            edge.rel or "",
            _entity_name(graph, edge.dst),
            score,
        )
        for edge, score in edge_score.items()
    ]
    triples.sort(key=lambda t: (-t[3], t[0], t[1], t[2]))
    ctx.triples = triples

    parents = [
        (chunk_id, str(graph.node(chunk_id).props.get("text", "")), score)
        for chunk_id, score in chunk_score.items()
    ]
    parents.sort(key=lambda p: (-p[2], p[0]))
    ctx.parents = parents
    return ctx


def assemble_context(ctx: RetrievalContext, token_budget: int) -> str:
    """Render a retrieval context as newline-joined lines within a budget.

    Candidate lines are the triples (`subject --- relation --- object`) in
    hit-score order, then each parent chunk's text as one line (internal
    newlines become spaces). Duplicate lines keep their first occurrence.
    Packing is greedy and stops at the first line that would exceed
    `token_budget` counted with the shared tokenizer, so the output never
    exceeds the budget and lines are never split.
    """
    if token_budget < 0:
        raise InvalidParams(f"token_budget must be >= 0, got {token_budget}")
    candidates: List[str] = [
        f"{subject} --- {relation} --- {obj}" for subject, relation, obj, _ in ctx.triples
    ]
    candidates += [" ".join(text.splitlines()) for _, text, _ in ctx.parents]

    seen = set()
    used = 0
    kept: List[str] = []
    for line in candidates:
        if line in seen:
            continue
        seen.add(line)
        cost = count_tokens(line)
        if used + cost > token_budget:
            break
        kept.append(line)
        used += cost
    return "\n".join(kept)
