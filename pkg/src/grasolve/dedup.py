"""Entity deduplication: edit distance, grouping, and merging.

Candidate pairs must look alike in embedding space (cosine at or above a
threshold) and in name space (Levenshtein distance over case-folded names
at or below a threshold). Pairs are grouped into connected components and
each component is merged into the member with the longest name.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Set

from .errors import InvalidParams
from .graph import NodeKind, PropertyGraph, cosine

logger = logging.getLogger(__name__)


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over Unicode scalar values."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[-1]


class _UnionFind:
    def __init__(self, items: Sequence[str]):
        self._parent: Dict[str, str] = {item: item for item in items}

    def find(self, item: str) -> str:
        root = item
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[item] != root:
            self._parent[item], item = root, self._parent[item]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # Deterministic root choice keeps grouping reproducible.
            if ra < rb:
                self._parent[rb] = ra
            else:
                self._parent[ra] = rb

    def groups(self) -> List[Set[str]]:
        by_root: Dict[str, Set[str]] = {}
        for item in self._parent:
            by_root.setdefault(self.find(item), set()).add(item)
        return [members for _, members in sorted(by_root.items())]


def filter_subset_groups(groups: Sequence[Set[str]]) -> List[Set[str]]:
    """Drop any group strictly contained in (or equal to) an earlier/larger one.

    Connected components can never nest, so this pass is a no-op on them;
    it is kept for callers that build candidate groups some other way.
    """
    ordered = sorted(groups, key=lambda g: (-len(g), sorted(g)))
    kept: List[Set[str]] = []
    for group in ordered:
        if any(group <= other for other in kept):
            continue
        kept.append(group)
    return kept


@dataclass
class DedupReport:
    groups_merged: int = 0
    nodes_removed: int = 0


def dedup_entities(
    graph: PropertyGraph,
    cos_threshold: float,
    lev_threshold: int,
) -> DedupReport:
    """Merge entity nodes that agree in both embedding and name space.

    A pair qualifies when cosine(embeddings) >= cos_threshold AND
    levenshtein(casefolded names) <= lev_threshold; entities missing an
    embedding never qualify. Qualifying pairs are grouped into connected
    components; in each component the node with the longest name survives
    (ties: lexicographically smallest name). Running the operation twice
    changes nothing the second time.
    """
    if not 0.0 <= cos_threshold <= 1.0:
        raise InvalidParams(f"cos_threshold must be in [0, 1], got {cos_threshold}")
    if lev_threshold < 0:
        raise InvalidParams(f"lev_threshold must be >= 0, got {lev_threshold}")

    entities = graph.nodes(NodeKind.ENTITY)
    names: Dict[str, str] = {}
    for node in entities:
        name = node.props.get("name", node.id)
        names[node.id] = name if isinstance(name, str) else str(name)

    uf = _UnionFind([node.id for node in entities])
    paired = False
    for i, left in enumerate(entities):
        for right in entities[i + 1 :]:
            if left.embedding is None or right.embedding is None:
                continue
            if cosine(left.embedding, right.embedding) < cos_threshold:
                continue
            if levenshtein(names[left.id].casefold(), names[right.id].casefold()) > lev_threshold:
                continue
            uf.union(left.id, right.id)
            paired = True

    report = DedupReport()
    if not paired:
        return report
    groups = filter_subset_groups([g for g in uf.groups() if len(g) > 1])
    for group in groups:
        # Longest name wins; ties break to the lexicographically smallest.
        survivor = min(group, key=lambda nid: (-len(names[nid]), names[nid], nid))
        graph.merge_nodes(sorted(group), survivor)
        report.groups_merged += 1
        report.nodes_removed += len(group) - 1
        logger.debug("merged %d entities into %s", len(group), survivor)
    return report
