"""Code skeletonization into a hierarchy of code units.

Source text is parsed with a lightweight language profile (no full AST)
into nested Module/Class/Function/Method units. Each unit's skeleton keeps
its own lines verbatim and replaces every direct child's span with a single
`# -> node:<name>` marker line, so re-inlining children recursively
reproduces the source byte for byte.

Two profiles ship: an indentation-delimited `def`/`class` profile (the
reference) and a brace-delimited `function`/`class` profile used as a
conformance fixture. The brace profile counts braces naively and assumes
they do not appear inside string literals.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Pattern, Tuple, Union

from .embeddings import Embedder
from .errors import UnbalancedScopes
from .graph import Edge, EdgeLabel, Node, NodeKind, PropertyGraph


class CodeScope(str, Enum):
    MODULE = "module"
    CLASS = "class"
    FUNCTION = "function"
    METHOD = "method"


@dataclass
class CodeUnit:
    name: str
    scope: CodeScope
    signature: str
    span: Tuple[int, int] = (0, 0)  # [start, end) line indexes, 0-based
    indent: str = ""
    children: List["CodeUnit"] = field(default_factory=list)
    # Interleaved own lines (str, keepends) and child units, in source order.
    parts: List[Union[str, "CodeUnit"]] = field(default_factory=list, repr=False, compare=False)

    @property
    def skeleton_text(self) -> str:
        out: List[str] = []
        for part in self.parts:
            if isinstance(part, CodeUnit):
                out.append(f"{part.indent}# -> node:{part.name}\n")
            else:
                out.append(part)
        return "".join(out)


@dataclass(frozen=True)
class LanguageProfile:
    name: str
    style: str  # "indent" | "brace"
    header_re: Pattern[str]
    class_keyword: str = "class"


INDENT_PROFILE = LanguageProfile(
    name="indent-def-class",
    style="indent",
    header_re=re.compile(r"^[ \t]*(?P<kind>def|class)\s+(?P<name>[A-Za-z_]\w*)"),
)

BRACE_PROFILE = LanguageProfile(
    name="brace-function-class",
    style="brace",
    header_re=re.compile(r"^[ \t]*(?P<kind>function|class)\s+(?P<name>[A-Za-z_]\w*)"),
)


def _child_scope(kind: str, parent: CodeUnit, profile: LanguageProfile) -> CodeScope:
    if kind == profile.class_keyword:
        return CodeScope.CLASS
    if parent.scope is CodeScope.CLASS:
        return CodeScope.METHOD
    return CodeScope.FUNCTION


def _leading_ws(line: str) -> str:
    return line[: len(line) - len(line.lstrip(" \t"))]


def _parse_indent(lines: List[str], profile: LanguageProfile) -> CodeUnit:
    module = CodeUnit("<module>", CodeScope.MODULE, "")
    # (unit, header indent width); scopes stay open while lines indent deeper.
    stack: List[Tuple[CodeUnit, int]] = [(module, -1)]
    pending_blanks: List[str] = []
    for i, line in enumerate(lines):
        if not line.strip():
            pending_blanks.append(line)
            continue
        indent = len(_leading_ws(line))
        while len(stack) > 1 and indent <= stack[-1][1]:
            stack.pop()
        current = stack[-1][0]
        current.parts.extend(pending_blanks)
        pending_blanks.clear()
        match = profile.header_re.match(line)
        if match:
            unit = CodeUnit(
                name=match.group("name"),
                scope=_child_scope(match.group("kind"), current, profile),
                signature=line.strip(),
                span=(i, i + 1),
                indent=_leading_ws(line),
            )
            unit.parts.append(line)
            current.children.append(unit)
            current.parts.append(unit)
            stack.append((unit, indent))
        else:
            current.parts.append(line)
    module.parts.extend(pending_blanks)
    return module


def _parse_brace(lines: List[str], profile: LanguageProfile) -> CodeUnit:
    module = CodeUnit("<module>", CodeScope.MODULE, "")
    # (unit, depth at which the unit's brace closes)
    stack: List[Tuple[CodeUnit, int]] = [(module, -1)]
    depth = 0
    for i, line in enumerate(lines):
        match = profile.header_re.match(line)
        net = line.count("{") - line.count("}")
        if match and "{" in line:
            current = stack[-1][0]
            unit = CodeUnit(
                name=match.group("name"),
                scope=_child_scope(match.group("kind"), current, profile),
                signature=line.strip().rstrip("{").strip(),
                span=(i, i + 1),
                indent=_leading_ws(line),
            )
            unit.parts.append(line)
            current.children.append(unit)
            current.parts.append(unit)
            stack.append((unit, depth))
        else:
            stack[-1][0].parts.append(line)
        depth += net
        if depth < 0:
            raise UnbalancedScopes(f"line {i + 1}: closing brace without an open scope")
        while len(stack) > 1 and depth <= stack[-1][1]:
            stack.pop()
    if depth != 0 or len(stack) > 1:
        raise UnbalancedScopes(f"{depth} scope(s) left open at end of source")
    return module


def _finalize_spans(unit: CodeUnit, start: int) -> int:
    count = 0
    cursor = start
    for part in unit.parts:
        if isinstance(part, CodeUnit):
            child_lines = _finalize_spans(part, cursor)
            cursor += child_lines
            count += child_lines
        else:
            cursor += 1
            count += 1
    unit.span = (start, start + count)
    return count


def _flatten(unit: CodeUnit, out: List[CodeUnit]) -> None:
    out.append(unit)
    for child in unit.children:
        _flatten(child, out)


def skeletonize_code(source_text: str, profile: LanguageProfile = INDENT_PROFILE) -> List[CodeUnit]:
    """Parse `source_text` into code units, preorder with the module first.

    The module unit always exists (even for empty source) and spans the
    whole text. Raises UnbalancedScopes for a brace profile when braces do
    not balance; the indentation profile cannot be unbalanced.
    """
    lines = source_text.splitlines(keepends=True)
    if profile.style == "indent":
        module = _parse_indent(lines, profile)
    elif profile.style == "brace":
        module = _parse_brace(lines, profile)
    else:
        raise UnbalancedScopes(f"unknown profile style {profile.style!r}")
    _finalize_spans(module, 0)
    flat: List[CodeUnit] = []
    _flatten(module, flat)
    return flat


def reconstruct_source(unit: CodeUnit) -> str:
    """Re-inline children recursively; inverse of skeletonization."""
    out: List[str] = []
    for part in unit.parts:
        if isinstance(part, CodeUnit):
            out.append(reconstruct_source(part))
        else:
            out.append(part)
    return "".join(out)


def write_code_units(
    graph: PropertyGraph,
    root: CodeUnit,
    source_id: str = "code",
    embedder: Optional[Embedder] = None,
) -> List[str]:
    """Write a unit tree into `graph` as CodeUnit nodes with ParentOf edges.

    Node ids are `code:<source_id>` for the root and slash-joined name
    paths below it (duplicate sibling names get `#<n>` suffixes). ParentOf
    edges run parent -> child, mirroring nesting. Returns the created node
    ids in preorder. Re-running with the same inputs is a no-op.
    """
    created: List[str] = []

    def visit(unit: CodeUnit, node_id: str, parent_id: Optional[str]) -> None:
        if not graph.has_node(node_id):
            graph.add_node(
                Node(
                    node_id,
                    NodeKind.CODE_UNIT,
                    {
                        "name": unit.name,
                        "scope": unit.scope.value,
                        "signature": unit.signature,
                        "skeleton": unit.skeleton_text,
                    },
                    embedder.embed(unit.skeleton_text) if embedder is not None else None,
                )
            )
        if parent_id is not None:
            graph.add_edge(Edge(parent_id, node_id, EdgeLabel.PARENT_OF))
        created.append(node_id)
        used: dict = {}
        for child in unit.children:
            ordinal = used.get(child.name, 0)
            used[child.name] = ordinal + 1
            suffix = f"#{ordinal}" if ordinal else ""
            visit(child, f"{node_id}/{child.name}{suffix}", node_id)

    visit(root, f"code:{source_id}", None)
    return created
