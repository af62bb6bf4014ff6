"""Property-graph knowledge store.

Typed nodes with scalar properties and optional fixed-dimension embeddings,
labeled edges with endpoint-kind rules, exact cosine kNN over the node set,
node merging for entity resolution, and a line-oriented JSONL interchange
format.

Concurrency contract: a graph instance supports many concurrent readers or
one writer, never both. Callers that mutate a shared graph must serialize
access themselves; the structure itself takes no locks.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from .errors import (
    DimensionMismatch,
    DuplicateId,
    IntegrityError,
    InvalidParams,
    KindMismatch,
    MissingEndpoint,
    MissingNode,
    MixedKinds,
    ParseError,
)

Scalar = Union[str, int, float, bool]

_SCALAR_TYPES = (str, int, float, bool)


class NodeKind(str, Enum):
    CHUNK = "chunk"
    ENTITY = "entity"
    TABLE = "table"
    ROW = "row"
    IMAGE = "image"
    CODE_UNIT = "code_unit"


class EdgeLabel(str, Enum):
    MENTIONS = "mentions"
    RELATION = "relation"
    BELONGS = "belongs"
    VISUALLY_SIMILAR = "visually_similar"
    PARENT_OF = "parent_of"


class Direction(str, Enum):
    OUT = "out"
    IN = "in"
    BOTH = "both"


# Allowed (src kind, dst kind) per edge label.
_ENDPOINT_RULES: Dict[EdgeLabel, Tuple[NodeKind, NodeKind]] = {
    EdgeLabel.MENTIONS: (NodeKind.ENTITY, NodeKind.CHUNK),
    EdgeLabel.RELATION: (NodeKind.ENTITY, NodeKind.ENTITY),
    EdgeLabel.BELONGS: (NodeKind.ROW, NodeKind.TABLE),
    EdgeLabel.VISUALLY_SIMILAR: (NodeKind.IMAGE, NodeKind.IMAGE),
    EdgeLabel.PARENT_OF: (NodeKind.CODE_UNIT, NodeKind.CODE_UNIT),
}


@dataclass
class Node:
    id: str
    kind: NodeKind
    props: Dict[str, Scalar] = field(default_factory=dict)
    embedding: Optional[List[float]] = None


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    label: EdgeLabel
    rel: Optional[str] = None

    def __post_init__(self):
        if self.label is EdgeLabel.RELATION:
            if not self.rel:
                raise InvalidParams("relation edges require a non-empty rel name")
        elif self.rel is not None:
            raise InvalidParams(f"{self.label.value} edges carry no rel name")


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    """Cosine similarity; either vector having zero norm yields 0.0."""
    if len(a) != len(b):
        raise DimensionMismatch(f"vector lengths differ: {len(a)} vs {len(b)}")
    dot = 0.0
    na = 0.0
    nb = 0.0
    for x, y in zip(a, b):
        dot += x * y
        na += x * x
        nb += y * y
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / math.sqrt(na * nb)


class PropertyGraph:
    """In-memory property graph with one fixed embedding dimension.

    `dim` may be left unset; the first embedded node pins it and every
    later embedding must match.
    """

    def __init__(self, dim: Optional[int] = None):
        if dim is not None and dim < 1:
            raise DimensionMismatch(f"embedding dimension must be >= 1, got {dim}")
        self._dim = dim
        self._nodes: Dict[str, Node] = {}
        self._edges: Set[Edge] = set()
        self._out: Dict[str, Set[Edge]] = {}
        self._in: Dict[str, Set[Edge]] = {}

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------

    @property
    def dim(self) -> Optional[int]:
        return self._dim

    def node_count(self) -> int:
        return len(self._nodes)

    def edge_count(self) -> int:
        return len(self._edges)

    def has_node(self, node_id: str) -> bool:
        return node_id in self._nodes

    def node(self, node_id: str) -> Node:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise MissingNode(f"no node with id {node_id!r}") from None

    def nodes(self, kind: Optional[NodeKind] = None) -> List[Node]:
        """All nodes (optionally one kind), sorted by id for determinism."""
        out = [n for n in self._nodes.values() if kind is None or n.kind is kind]
        out.sort(key=lambda n: n.id)
        return out

    def edges(self) -> List[Edge]:
        return sorted(
            self._edges, key=lambda e: (e.src, e.dst, e.label.value, e.rel or "")
        )

    def stats(self) -> Dict[str, object]:
        by_kind: Dict[str, int] = {}
        for node in self._nodes.values():
            by_kind[node.kind.value] = by_kind.get(node.kind.value, 0) + 1
        by_label: Dict[str, int] = {}
        for edge in self._edges:
            by_label[edge.label.value] = by_label.get(edge.label.value, 0) + 1
        return {
            "nodes": len(self._nodes),
            "edges": len(self._edges),
            "dim": self._dim,
            "by_kind": dict(sorted(by_kind.items())),
            "by_label": dict(sorted(by_label.items())),
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PropertyGraph):
            return NotImplemented
        return (
            self._dim == other._dim
            and self._nodes == other._nodes
            and self._edges == other._edges
        )

    # ------------------------------------------------------------------
    # Mutation
    # ------------------------------------------------------------------

    def add_node(self, node: Node) -> Node:
        if node.id in self._nodes:
            raise DuplicateId(f"node id {node.id!r} already present")
        for key, value in node.props.items():
            if not isinstance(value, _SCALAR_TYPES):
                raise InvalidParams(
                    f"prop {key!r} of node {node.id!r} is not a scalar or string"
                )
        if node.embedding is not None:
            if self._dim is None:
                if len(node.embedding) < 1:
                    raise DimensionMismatch("embeddings must have dimension >= 1")
                self._dim = len(node.embedding)
            elif len(node.embedding) != self._dim:
                raise DimensionMismatch(
                    f"node {node.id!r} embedding has length {len(node.embedding)}, "
                    f"store dimension is {self._dim}"
                )
            node.embedding = [float(v) for v in node.embedding]
        self._nodes[node.id] = node
        self._out.setdefault(node.id, set())
        self._in.setdefault(node.id, set())
        return node

    def add_edge(self, edge: Edge) -> bool:
        """Insert `edge`, deduplicating on (src, dst, label, rel).

        Returns True when the edge was new, False when an identical edge
        already existed.
        """
        if edge.src not in self._nodes:
            raise MissingEndpoint(f"edge source {edge.src!r} is not in the graph")
        if edge.dst not in self._nodes:
            raise MissingEndpoint(f"edge target {edge.dst!r} is not in the graph")
        want_src, want_dst = _ENDPOINT_RULES[edge.label]
        src_kind = self._nodes[edge.src].kind
        dst_kind = self._nodes[edge.dst].kind
        if src_kind is not want_src or dst_kind is not want_dst:
            raise KindMismatch(
                f"{edge.label.value} edges connect {want_src.value}->{want_dst.value}, "
                f"got {src_kind.value}->{dst_kind.value}"
            )
        if edge in self._edges:
            return False
        if edge.label is EdgeLabel.PARENT_OF:
            self._check_forest(edge)
        self._edges.add(edge)
        self._out[edge.src].add(edge)
        self._in[edge.dst].add(edge)
        return True

    def _check_forest(self, edge: Edge) -> None:
        # parent_of edges run parent -> child; a child keeps at most one
        # parent and ancestor chains never revisit a node.
        if edge.src == edge.dst:
            raise IntegrityError(f"parent_of self-loop on {edge.src!r}")
        for existing in self._in.get(edge.dst, ()):
            if existing.label is EdgeLabel.PARENT_OF and existing.src != edge.src:
                raise IntegrityError(
                    f"node {edge.dst!r} already has parent {existing.src!r}"
                )
        seen = {edge.dst}
        cursor = edge.src
        while cursor is not None:
            if cursor in seen:
                raise IntegrityError(
                    f"parent_of edge {edge.src!r}->{edge.dst!r} would close a cycle"
                )
            seen.add(cursor)
            parent = None
            for incoming in self._in.get(cursor, ()):
                if incoming.label is EdgeLabel.PARENT_OF:
                    parent = incoming.src
                    break
            cursor = parent

    def remove_edge(self, edge: Edge) -> None:
        if edge not in self._edges:
            return
        self._edges.discard(edge)
        self._out[edge.src].discard(edge)
        self._in[edge.dst].discard(edge)

    # ------------------------------------------------------------------
    # Queries
    # ------------------------------------------------------------------

    def neighbors(
        self,
        node_id: str,
        label: Optional[EdgeLabel] = None,
        direction: Direction = Direction.BOTH,
    ) -> List[Tuple[str, Edge]]:
        """Adjacent (neighbor id, edge) pairs, sorted by neighbor id.

        `direction` selects outgoing edges, incoming edges, or both.
        """
        if node_id not in self._nodes:
            raise MissingNode(f"no node with id {node_id!r}")
        hits: List[Tuple[str, Edge]] = []
        if direction in (Direction.OUT, Direction.BOTH):
            for edge in self._out[node_id]:
                if label is None or edge.label is label:
                    hits.append((edge.dst, edge))
        if direction in (Direction.IN, Direction.BOTH):
            for edge in self._in[node_id]:
                if label is None or edge.label is label:
                    hits.append((edge.src, edge))
        hits.sort(key=lambda item: (item[0], item[1].label.value, item[1].rel or "", item[1].src))
        # A self-loop shows up under both directions; report it once.
        deduped: List[Tuple[str, Edge]] = []
        for item in hits:
            if not deduped or deduped[-1] != item:
                deduped.append(item)
        return deduped

    def knn(
        self,
        query_vec: Sequence[float],
        k: int,
        kind: Optional[NodeKind] = None,
    ) -> List[Tuple[str, float]]:
        """Exact k-nearest nodes by cosine, full scan.

        Results are sorted by descending similarity with ties broken by
        ascending node id. Nodes without embeddings are skipped. Returns
        fewer than k pairs when the graph is small.
        """
        if k < 1:
            raise InvalidParams(f"k must be >= 1, got {k}")
        if self._dim is not None and len(query_vec) != self._dim:
            raise DimensionMismatch(
                f"query vector has length {len(query_vec)}, store dimension is {self._dim}"
            )
        scored: List[Tuple[float, str]] = []
        for node_id, node in self._nodes.items():
            if kind is not None and node.kind is not kind:
                continue
            if node.embedding is None:
                continue
            scored.append((-cosine(query_vec, node.embedding), node_id))
        scored.sort()
        return [(node_id, -neg) for neg, node_id in scored[:k]]

    # ------------------------------------------------------------------
    # Merging
    # ------------------------------------------------------------------

    def merge_nodes(self, group: Sequence[str], survivor: str) -> None:
        """Collapse `group` into `survivor`.

        Edges touching removed members are rewired to the survivor;
        self-loops created by rewiring are dropped and duplicates collapse.
        Property maps merge with the survivor's values winning conflicts;
        among removed members, the lowest node id wins. The survivor keeps
        its own embedding.
        """
        if not group:
            raise InvalidParams("merge group must be non-empty")
        if survivor not in group:
            raise InvalidParams(f"survivor {survivor!r} is not in the merge group")
        members = list(dict.fromkeys(group))
        for node_id in members:
            if node_id not in self._nodes:
                raise MissingNode(f"no node with id {node_id!r}")
        kinds = {self._nodes[node_id].kind for node_id in members}
        if len(kinds) > 1:
            raise MixedKinds(
                "merge group spans kinds: " + ", ".join(sorted(k.value for k in kinds))
            )
        losers = [m for m in members if m != survivor]
        if not losers:
            return
        loser_set = set(losers)

        merged_props: Dict[str, Scalar] = {}
        for node_id in sorted(losers):
            for key, value in self._nodes[node_id].props.items():
                merged_props.setdefault(key, value)
        merged_props.update(self._nodes[survivor].props)

        touched: Set[Edge] = set()
        for node_id in losers:
            touched |= self._out[node_id]
            touched |= self._in[node_id]
        for edge in sorted(touched, key=lambda e: (e.src, e.dst, e.label.value, e.rel or "")):
            self.remove_edge(edge)
            new_src = survivor if edge.src in loser_set else edge.src
            new_dst = survivor if edge.dst in loser_set else edge.dst
            if new_src == new_dst:
                continue
            replacement = Edge(new_src, new_dst, edge.label, edge.rel)
            if replacement not in self._edges:
                self.add_edge(replacement)

        for node_id in losers:
            del self._nodes[node_id]
            del self._out[node_id]
            del self._in[node_id]
        self._nodes[survivor].props = merged_props


# --------------------------------------------------------------------------
# JSONL interchange
# --------------------------------------------------------------------------

def _fmt_float(value: float) -> str:
    # 17 significant digits uniquely identify an IEEE double, so parsing
    # the text back yields the identical bits.
    return format(float(value), ".17g")


def _json_atom(value: object) -> str:
    return json.dumps(value, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def _node_line(node: Node) -> str:
    parts = [
        '"t":"node"',
        f'"id":{_json_atom(node.id)}',
        f'"kind":{_json_atom(node.kind.value)}',
        f'"props":{_json_atom(node.props)}',
    ]
    if node.embedding is not None:
        parts.append('"emb":[' + ",".join(_fmt_float(v) for v in node.embedding) + "]")
    return "{" + ",".join(parts) + "}"


def _edge_line(edge: Edge) -> str:
    parts = [
        '"t":"edge"',
        f'"src":{_json_atom(edge.src)}',
        f'"dst":{_json_atom(edge.dst)}',
        f'"label":{_json_atom(edge.label.value)}',
    ]
    if edge.rel is not None:
        parts.append(f'"rel":{_json_atom(edge.rel)}')
    return "{" + ",".join(parts) + "}"


def export_graph(graph: PropertyGraph, sink) -> None:
    """Write `graph` as JSONL: every node line, then every edge line.

    `sink` is a path or a writable text file object. Output is canonical:
    nodes sorted by id, edges sorted by (src, dst, label, rel), floats at
    17 significant digits, so identical graphs export identical bytes.
    """
    own = isinstance(sink, (str, os.PathLike))
    fh = open(sink, "w", encoding="utf-8") if own else sink
    try:
        for node in graph.nodes():
            fh.write(_node_line(node) + "\n")
        for edge in graph.edges():
            fh.write(_edge_line(edge) + "\n")
    finally:
        if own:
            fh.close()


def _iter_lines(source) -> Iterable[str]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from fh
    elif hasattr(source, "read"):
        yield from source
    else:
        yield from source


def import_graph(source, dim: Optional[int] = None) -> PropertyGraph:
    """Parse JSONL produced by :func:`export_graph` back into a graph.

    Raises ParseError (with the offending 1-based line number) on malformed
    lines, unknown kinds/labels, duplicate ids, or a node line appearing
    after the edge block began. Raises IntegrityError when a structurally
    valid line violates a graph invariant, e.g. an edge referencing a
    missing node.
    """
    graph = PropertyGraph(dim=dim)
    seen_edge = False
    for lineno, raw in enumerate(_iter_lines(source), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
        if not isinstance(obj, dict):
            raise ParseError("expected a JSON object", line=lineno)
        tag = obj.get("t")
        if tag == "node":
            if seen_edge:
                raise ParseError("node line after the edge block began", line=lineno)
            try:
                kind = NodeKind(obj["kind"])
            except (KeyError, ValueError):
                raise ParseError(f"bad node kind {obj.get('kind')!r}", line=lineno) from None
            node_id = obj.get("id")
            if not isinstance(node_id, str):
                raise ParseError("node id must be a string", line=lineno)
            props = obj.get("props", {})
            if not isinstance(props, dict):
                raise ParseError("props must be an object", line=lineno)
            emb = obj.get("emb")
            if emb is not None and not isinstance(emb, list):
                raise ParseError("emb must be an array", line=lineno)
            try:
                graph.add_node(Node(node_id, kind, props, emb))
            except DuplicateId as exc:
                raise ParseError(str(exc), line=lineno) from exc
            except (DimensionMismatch, InvalidParams) as exc:
                raise IntegrityError(f"line {lineno}: {exc}") from exc
        elif tag == "edge":
            seen_edge = True
            try:
                label = EdgeLabel(obj["label"])
            except (KeyError, ValueError):
                raise ParseError(f"bad edge label {obj.get('label')!r}", line=lineno) from None
            src, dst = obj.get("src"), obj.get("dst")
            if not isinstance(src, str) or not isinstance(dst, str):
                raise ParseError("edge endpoints must be strings", line=lineno)
            try:
                edge = Edge(src, dst, label, obj.get("rel"))
            except InvalidParams as exc:
                raise ParseError(str(exc), line=lineno) from exc
            try:
                graph.add_edge(edge)
            except (MissingEndpoint, KindMismatch, IntegrityError) as exc:
                raise IntegrityError(f"line {lineno}: {exc}") from exc
        else:
            raise ParseError(f"unknown record type {tag!r}", line=lineno)
    return graph
