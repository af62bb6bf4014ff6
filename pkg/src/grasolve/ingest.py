"""Document ingestion: chunking, triple extraction, tables, and images.

A parsed document is a flat list of text, table, and image blocks.
Text blocks are chunked with a sliding token window; an extractor provider
turns each chunk into `subject --- relation --- object` lines that become
Entity nodes, Relation edges, and Mentions edges. Tables become Table/Row
nodes, images become Image nodes linked to their nearest visual neighbors.

Node ids are deterministic functions of the document content and position,
which is what makes re-ingestion a no-op.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Protocol, Sequence, Tuple, Union

from .embeddings import Embedder
from .errors import (
    ExtractorFailure,
    GrasolveError,
    InvalidParams,
    ParseError,
    RaggedTable,
)
from .graph import Edge, EdgeLabel, Node, NodeKind, PropertyGraph, Scalar, cosine
from .textutil import token_spans

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# Document model
# --------------------------------------------------------------------------

@dataclass
class TextBlock:
    page: int
    text: str


@dataclass
class TableBlock:
    page: int
    title: str
    columns: List[str]
    rows: List[List[Scalar]]


@dataclass
class ImageBlock:
    page: int
    path: str
    format: str = ""
    resolution: str = ""
    caption: str = ""


Block = Union[TextBlock, TableBlock, ImageBlock]


@dataclass
class ParsedDocument:
    doc_id: str
    title: str = ""
    blocks: List[Block] = field(default_factory=list)


def parse_document(source) -> ParsedDocument:
    """Load a document from a JSON file path, file object, or dict.

    Schema: {"doc_id": str, "title": str, "blocks": [block...]} where each
    block carries "type" in {"text", "table", "image"} plus the fields of
    the matching block dataclass. Raises ParseError on schema violations
    and RaggedTable when a table row's width differs from its header.
    """
    if isinstance(source, dict):
        data = source
    else:
        own = isinstance(source, (str, os.PathLike))
        fh = open(source, "r", encoding="utf-8") if own else source
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"document is not valid JSON: {exc.msg}") from exc
        finally:
            if own:
                fh.close()
    if not isinstance(data, dict):
        raise ParseError("document must be a JSON object")
    doc_id = data.get("doc_id")
    if not isinstance(doc_id, str) or not doc_id:
        raise ParseError("doc_id must be a non-empty string")
    title = data.get("title", "")
    if not isinstance(title, str):
        raise ParseError("title must be a string")
    raw_blocks = data.get("blocks", [])
    if not isinstance(raw_blocks, list):
        raise ParseError("blocks must be an array")

    blocks: List[Block] = []
    for i, raw in enumerate(raw_blocks):
        if not isinstance(raw, dict):
            raise ParseError(f"block {i} must be an object")
        page = raw.get("page", 0)
        if not isinstance(page, int) or isinstance(page, bool) or page < 0:
            raise ParseError(f"block {i}: page must be a non-negative integer")
        btype = raw.get("type")
        if btype == "text":
            text = raw.get("text")
            if not isinstance(text, str):
                raise ParseError(f"block {i}: text blocks need a string 'text'")
            blocks.append(TextBlock(page=page, text=text))
        elif btype == "table":
            columns = raw.get("columns")
            rows = raw.get("rows", [])
            if not isinstance(columns, list) or not all(isinstance(c, str) for c in columns):
                raise ParseError(f"block {i}: table columns must be strings")
            if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
                raise ParseError(f"block {i}: table rows must be arrays")
            for j, row in enumerate(rows):
                if len(row) != len(columns):
                    raise RaggedTable(
                        f"block {i} row {j}: {len(row)} cells for {len(columns)} columns"
                    )
            blocks.append(
                TableBlock(page=page, title=raw.get("title", ""), columns=columns, rows=rows)
            )
        elif btype == "image":
            path = raw.get("path")
            if not isinstance(path, str) or not path:
                raise ParseError(f"block {i}: image blocks need a non-empty 'path'")
            blocks.append(
                ImageBlock(
                    page=page,
                    path=path,
                    format=raw.get("format", ""),
                    resolution=raw.get("resolution", ""),
                    caption=raw.get("caption", ""),
                )
            )
        else:
            raise ParseError(f"block {i}: unknown block type {btype!r}")
    return ParsedDocument(doc_id=doc_id, title=title, blocks=blocks)


# --------------------------------------------------------------------------
# Chunking
# --------------------------------------------------------------------------

@dataclass
class Chunk:
    doc_id: str
    index: int
    token_span: Tuple[int, int]
    text: str


def chunk_text(text: str, window: int, stride: int, doc_id: str = "") -> List[Chunk]:
    """Slide a `window`-token frame over `text` in `stride`-token steps.

    Window starts run 0, stride, 2*stride, ... while the start is inside
    the token sequence; each span is clipped to the text and a chunk whose
    span is a subset of the previously emitted span is suppressed. Chunk
    text is the verbatim source slice from the first to the last token of
    the span.
    """
    if window < 1:
        raise InvalidParams(f"window must be >= 1, got {window}")
    if stride < 1 or stride > window:
        raise InvalidParams(f"stride must be in [1, window], got {stride}")
    spans = token_spans(text)
    total = len(spans)
    chunks: List[Chunk] = []
    prev: Optional[Tuple[int, int]] = None
    start = 0
    while start < total:
        end = min(start + window, total)
        if prev is None or not (start >= prev[0] and end <= prev[1]):
            lo = spans[start][1]
            hi = spans[end - 1][2]
            chunks.append(
                Chunk(doc_id=doc_id, index=len(chunks), token_span=(start, end), text=text[lo:hi])
            )
            prev = (start, end)
        start += stride
    return chunks


# --------------------------------------------------------------------------
# Triple extraction
# --------------------------------------------------------------------------

@dataclass
class Triple:
    subject: str
    relation: str
    object: str
    source_chunk: str


class TripleExtractor(Protocol):
    """Produces `subject --- relation --- object` lines for a chunk text."""

    def extract(self, text: str) -> Union[str, List[str]]:
        ...


class FixtureTripleExtractor:
    """Replays triple lines from an exact-text map; unknown texts yield none.

    Keyed lookup (rather than sequential replay) keeps re-ingestion
    idempotent: the same chunk always produces the same lines.
    """

    def __init__(self, table: Dict[str, List[str]]):
        self._table = dict(table)

    @classmethod
    def from_file(cls, path: str) -> "FixtureTripleExtractor":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"triple fixture {path}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ParseError(f"triple fixture {path}: expected an object")
        return cls({k: list(v) for k, v in data.items()})

    def extract(self, text: str) -> List[str]:
        return list(self._table.get(text, []))


class BackendTripleExtractor:
    """Asks a model backend for triple lines, one call per chunk."""

    DEFAULT_INSTRUCTION = (
        "Extract knowledge triples from the passage. Reply with one triple "
        "per line in the form: subject --- relation --- object"
    )

    def __init__(self, backend, instruction: Optional[str] = None):
        self._backend = backend
        self._instruction = instruction or self.DEFAULT_INSTRUCTION

    def extract(self, text: str) -> str:
        return self._backend.complete(self._instruction, text)


_ENTITY_DECOR_RE = re.compile(r"\(\s*entity\s*\)\s*$", re.IGNORECASE)


def _clean_term(term: str) -> str:
    return _ENTITY_DECOR_RE.sub("", term.strip()).strip()


def parse_triple_lines(lines: Union[str, Sequence[str]]) -> Tuple[List[Tuple[str, str, str]], int]:
    """Parse raw extractor output into (subject, relation, object) tuples.

    Accepts `s --- r --- o` with arbitrary surrounding whitespace, an
    optional outer parenthesis pair, and optional `(entity)` decoration on
    subject/object. Blank lines are ignored; malformed lines are skipped
    and counted. Returns (triples in source order, skipped count).
    """
    if isinstance(lines, str):
        lines = lines.splitlines()
    triples: List[Tuple[str, str, str]] = []
    skipped = 0
    for raw in lines:
        line = raw.strip()
        if not line:
            continue
        if line.startswith("(") and line.endswith(")"):
            line = line[1:-1].strip()
        parts = line.split("---")
        if len(parts) != 3:
            skipped += 1
            continue
        subject = _clean_term(parts[0])
        relation = parts[1].strip()
        obj = _clean_term(parts[2])
        if not subject or not relation or not obj:
            skipped += 1
            continue
        triples.append((subject, relation, obj))
    return triples, skipped


def extract_triples(
    chunk: Chunk,
    extractor: TripleExtractor,
    chunk_node_id: Optional[str] = None,
) -> Tuple[List[Triple], int]:
    """Run the extractor on one chunk and parse its output.

    Returns (triples tagged with the chunk's node id, malformed-line count).
    Extractor failures are raised as ExtractorFailure carrying the chunk id.
    """
    node_id = chunk_node_id or f"{chunk.doc_id or 'doc'}/c{chunk.index}"
    try:
        raw = extractor.extract(chunk.text)
    except GrasolveError as exc:
        raise ExtractorFailure(str(exc), chunk_id=node_id) from exc
    except Exception as exc:  # provider bug or transport failure
        raise ExtractorFailure(f"{type(exc).__name__}: {exc}", chunk_id=node_id) from exc
    parsed, skipped = parse_triple_lines(raw)
    return [Triple(s, r, o, source_chunk=node_id) for s, r, o in parsed], skipped


# --------------------------------------------------------------------------
# Graph writers
# --------------------------------------------------------------------------

@dataclass
class IngestReport:
    chunks: int = 0
    entities: int = 0
    triples: int = 0
    skipped: int = 0


def _entity_id(surface: str) -> str:
    return f"ent:{surface}"


def _ensure_entity(graph: PropertyGraph, surface: str, embedder: Embedder) -> str:
    node_id = _entity_id(surface)
    if not graph.has_node(node_id):
        graph.add_node(
            Node(node_id, NodeKind.ENTITY, {"name": surface}, embedder.embed(surface))
        )
    return node_id


def ingest_table(
    graph: PropertyGraph,
    table: TableBlock,
    embedder: Embedder,
    node_id: Optional[str] = None,
) -> str:
    """Add one Table node plus a Row node (and Belongs edge) per row.

    The table embedding covers the flattened title/header/cell content.
    Without an explicit `node_id` the id is a content hash, so re-ingesting
    the same table is a no-op. Returns the table node id.
    """
    for j, row in enumerate(table.rows):
        if len(row) != len(table.columns):
            raise RaggedTable(f"row {j}: {len(row)} cells for {len(table.columns)} columns")
    if node_id is None:
        digest = hashlib.sha1(
            json.dumps(
                [table.page, table.title, table.columns, table.rows],
                ensure_ascii=False,
                sort_keys=True,
            ).encode("utf-8")
        ).hexdigest()[:16]
        node_id = f"table:{digest}"
    if graph.has_node(node_id):
        return node_id
    flat_lines = [table.title, ", ".join(table.columns)]
    flat_lines += [", ".join(str(cell) for cell in row) for row in table.rows]
    flat = "\n".join(line for line in flat_lines if line)
    graph.add_node(
        Node(
            node_id,
            NodeKind.TABLE,
            {
                "table_id": node_id,
                "title": table.title,
                "page": table.page,
                "summary": flat,
            },
            embedder.embed(flat),
        )
    )
    for j, row in enumerate(table.rows):
        row_id = f"{node_id}/r{j}"
        graph.add_node(
            Node(row_id, NodeKind.ROW, {col: cell for col, cell in zip(table.columns, row)})
        )
        graph.add_edge(Edge(row_id, node_id, EdgeLabel.BELONGS))
    return node_id


def ingest_image(
    graph: PropertyGraph,
    image: ImageBlock,
    embedder: Embedder,
    k_similar: int = 3,
    node_id: Optional[str] = None,
) -> str:
    """Add one Image node and link it to its nearest existing images.

    The image embedding is taken from the caption (falling back to the
    path) through the supplied embedder, which stands in for a visual
    encoder. Each of the `k_similar` nearest existing Image nodes by
    cosine is linked with a VisuallySimilar edge in both directions.
    Returns the image node id.
    """
    if k_similar < 0:
        raise InvalidParams(f"k_similar must be >= 0, got {k_similar}")
    if node_id is None:
        node_id = f"img:{image.path}"
    if graph.has_node(node_id):
        return node_id
    emb = embedder.embed(image.caption or image.path)
    neighbors: List[Tuple[float, str]] = []
    for other in graph.nodes(NodeKind.IMAGE):
        if other.embedding is None:
            continue
        neighbors.append((-cosine(emb, other.embedding), other.id))
    neighbors.sort()
    graph.add_node(
        Node(
            node_id,
            NodeKind.IMAGE,
            {
                "page": image.page,
                "resolution": image.resolution,
                "format": image.format,
                "summary": image.caption,
            },
            emb,
        )
    )
    for _, other_id in neighbors[:k_similar]:
        graph.add_edge(Edge(node_id, other_id, EdgeLabel.VISUALLY_SIMILAR))
        graph.add_edge(Edge(other_id, node_id, EdgeLabel.VISUALLY_SIMILAR))
    return node_id


def ingest_document(
    graph: PropertyGraph,
    doc: ParsedDocument,
    embedder: Embedder,
    extractor: TripleExtractor,
    window: int = 128,
    stride: int = 64,
    image_embedder: Optional[Embedder] = None,
    k_similar: int = 3,
) -> IngestReport:
    """Ingest every block of `doc` into `graph`.

    Text blocks are chunked; each chunk node carries title/page/text plus
    summary/keywords placeholders and its text embedding. Extracted triples
    create Entity nodes (one per distinct surface form, case-sensitive),
    Relation edges, and Mentions edges from both entities to the chunk.
    Deterministic ids make the whole operation idempotent. Embedder or
    extractor failures propagate with the failing block position attached.
    """
    report = IngestReport()
    surfaces: set = set()
    for bi, block in enumerate(doc.blocks):
        try:
            if isinstance(block, TextBlock):
                for chunk in chunk_text(block.text, window, stride, doc_id=doc.doc_id):
                    chunk_id = f"{doc.doc_id}/b{bi}/c{chunk.index}"
                    if not graph.has_node(chunk_id):
                        graph.add_node(
                            Node(
                                chunk_id,
                                NodeKind.CHUNK,
                                {
                                    "doc": doc.doc_id,
                                    "title": doc.title,
                                    "page": block.page,
                                    "text": chunk.text,
                                    "summary": "",
                                    "keywords": "",
                                },
                                embedder.embed(chunk.text),
                            )
                        )
                    report.chunks += 1
                    triples, skipped = extract_triples(chunk, extractor, chunk_node_id=chunk_id)
                    report.skipped += skipped
                    for triple in triples:
                        subj_id = _ensure_entity(graph, triple.subject, embedder)
                        obj_id = _ensure_entity(graph, triple.object, embedder)
                        surfaces.add(triple.subject)
                        surfaces.add(triple.object)
                        graph.add_edge(
                            Edge(subj_id, obj_id, EdgeLabel.RELATION, triple.relation)
                        )
                        graph.add_edge(Edge(subj_id, chunk_id, EdgeLabel.MENTIONS))
                        graph.add_edge(Edge(obj_id, chunk_id, EdgeLabel.MENTIONS))
                        report.triples += 1
            elif isinstance(block, TableBlock):
                ingest_table(graph, block, embedder, node_id=f"{doc.doc_id}/b{bi}/table")
            elif isinstance(block, ImageBlock):
                ingest_image(
                    graph,
                    block,
                    image_embedder or embedder,
                    k_similar=k_similar,
                    node_id=f"img:{block.path}",
                )
            else:
                raise InvalidParams(f"unsupported block type {type(block).__name__}")
        except GrasolveError as exc:
            exc.args = (f"block {bi}: {exc}",)
            raise
        except Exception as exc:  # embedder/provider bug
            raise GrasolveError(f"block {bi}: {type(exc).__name__}: {exc}") from exc
    report.entities = len(surfaces)
    return report
