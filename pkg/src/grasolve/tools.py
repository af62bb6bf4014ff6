"""Tool protocols, registry, call validation, and the built-in tools.

Each tool publishes a :class:`ToolProtocol` (name, overview, typed args,
response schema) that the planner sees and that `validate_call` checks
calls against. The built-in tools are:

* code    - a backend writes a snippet, the sandbox executes it
* math    - evaluate an arithmetic expression (optional remote compute
            service with local fallback; optional backend to extract an
            expression from a step description)
* search  - a backend crafts a query, a provider returns ranked snippets
* kgquery - retrieve from the knowledge graph and pack a context

Tool failures never raise out of a tool function; they land in the
returned :class:`ToolOutcome` with `success=False` and an error detail.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Protocol, Sequence

import requests

from .backends import ModelBackend, backend_complete
from .embeddings import Embedder
from .errors import (
    BackendFailure,
    GrasolveError,
    InvalidParams,
    NoResults,
    ParseError,
    RemoteError,
    UnknownTool,
)
from .graph import PropertyGraph
from .mathexpr import EvalError, evaluate_arithmetic, format_number
from .retrieval import RetrievalContext, assemble_context, retrieve
from .sandbox import SandboxConfig, run_snippet
from .textutil import tokenize

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# Protocols and validation
# --------------------------------------------------------------------------

_ARG_TYPES = ("string", "int", "float", "bool")


@dataclass(frozen=True)
class ArgSpec:
    name: str
    type: str
    required: bool = True
    description: str = ""

    def __post_init__(self):
        if self.type not in _ARG_TYPES:
            raise InvalidParams(f"unknown arg type {self.type!r}")


@dataclass(frozen=True)
class ToolProtocol:
    name: str
    overview: str
    args: Sequence[ArgSpec] = ()
    response_schema: Dict[str, str] = field(default_factory=dict)

    @property
    def primary_param(self) -> Optional[str]:
        for arg in self.args:
            if arg.required:
                return arg.name
        return self.args[0].name if self.args else None


@dataclass
class ToolCall:
    tool: str
    params: Dict[str, object] = field(default_factory=dict)


@dataclass
class ValidationReport:
    consistent: bool
    missing: List[str] = field(default_factory=list)
    extraneous: List[str] = field(default_factory=list)
    type_errors: List[str] = field(default_factory=list)
    required_total: int = 0
    required_ok: int = 0


def _value_matches(semantic_type: str, value: object) -> bool:
    if semantic_type == "string":
        return isinstance(value, str)
    if semantic_type == "bool":
        if isinstance(value, bool):
            return True
        return isinstance(value, str) and value.strip().lower() in (
            "true", "false", "1", "0", "yes", "no",
        )
    if semantic_type == "int":
        if isinstance(value, bool):
            return False
        if isinstance(value, int):
            return True
        if isinstance(value, str):
            try:
                int(value.strip())
                return True
            except ValueError:
                return False
        return False
    if semantic_type == "float":
        if isinstance(value, bool):
            return False
        if isinstance(value, (int, float)):
            return True
        if isinstance(value, str):
            try:
                float(value.strip())
                return True
            except ValueError:
                return False
        return False
    return False


def validate_call(protocol: ToolProtocol, call: ToolCall) -> ValidationReport:
    """Check a call's params against the protocol's arg specs.

    `missing` lists required args that are absent, `extraneous` lists
    params the protocol does not declare, `type_errors` lists declared
    params whose values do not parse to the declared semantic type.
    `consistent` is True exactly when all three lists are empty. Adding a
    valid value for a missing arg can never flip consistent to False.
    """
    declared = {arg.name: arg for arg in protocol.args}
    missing = [
        arg.name
        for arg in protocol.args
        if arg.required and arg.name not in call.params
    ]
    extraneous = [name for name in call.params if name not in declared]
    type_errors = [
        arg.name
        for arg in protocol.args
        if arg.name in call.params and not _value_matches(arg.type, call.params[arg.name])
    ]
    required = [arg for arg in protocol.args if arg.required]
    required_ok = sum(
        1
        for arg in required
        if arg.name in call.params and arg.name not in type_errors
    )
    return ValidationReport(
        consistent=not (missing or extraneous or type_errors),
        missing=missing,
        extraneous=extraneous,
        type_errors=type_errors,
        required_total=len(required),
        required_ok=required_ok,
    )


# --------------------------------------------------------------------------
# Outcomes
# --------------------------------------------------------------------------

@dataclass
class ToolOutcome:
    raw: str
    reformulated: str
    success: bool
    error_detail: Optional[str] = None
    # The model-produced tool input (snippet, expression, query); kept so
    # trajectories can show what was executed.
    tool_input: str = ""

    def __post_init__(self):
        if not self.success and not self.error_detail:
            raise InvalidParams("failed outcomes must carry an error detail")


def _failure(detail: str, raw: str = "", tool_input: str = "") -> ToolOutcome:
    return ToolOutcome(
        raw=raw, reformulated=f"Error: {detail}", success=False,
        error_detail=detail, tool_input=tool_input,
    )


def reformulate_stdout(stdout: str) -> str:
    lines = stdout.splitlines()
    return f"Result: {lines[-1] if lines else ''}"


def strip_code_fences(text: str) -> str:
    stripped = text.strip()
    if not stripped.startswith("```"):
        return text
    lines = stripped.splitlines()
    lines = lines[1:]
    if lines and lines[-1].strip() == "```":
        lines = lines[:-1]
    return "\n".join(lines)


# --------------------------------------------------------------------------
# Registry
# --------------------------------------------------------------------------

Handler = Callable[[object, str, str], ToolOutcome]


class ToolRegistry:
    """Name-keyed tool protocols with optional execution handlers.

    Handlers take (engine, step_description, filled_instruction) and
    return a ToolOutcome; third-party tools can register their own.
    """

    def __init__(self):
        self._protocols: Dict[str, ToolProtocol] = {}
        self._handlers: Dict[str, Optional[Handler]] = {}

    def register(self, protocol: ToolProtocol, handler: Optional[Handler] = None) -> None:
        if protocol.name in self._protocols:
            raise InvalidParams(f"tool {protocol.name!r} is already registered")
        self._protocols[protocol.name] = protocol
        self._handlers[protocol.name] = handler

    def lookup(self, name: str) -> ToolProtocol:
        try:
            return self._protocols[name]
        except KeyError:
            raise UnknownTool(f"no tool named {name!r}") from None

    def handler(self, name: str) -> Optional[Handler]:
        if name not in self._protocols:
            raise UnknownTool(f"no tool named {name!r}")
        return self._handlers[name]

    def names(self) -> List[str]:
        return sorted(self._protocols)

    def __contains__(self, name: str) -> bool:
        return name in self._protocols

    def describe(self) -> str:
        """Planner-facing catalog: one line per tool."""
        lines = []
        for name in self.names():
            proto = self._protocols[name]
            args = ", ".join(
                f"{a.name}:{a.type}{'' if a.required else '?'}" for a in proto.args
            )
            lines.append(f"{name}({args}): {proto.overview}")
        return "\n".join(lines)


# --------------------------------------------------------------------------
# Search and compute providers
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Snippet:
    id: str
    text: str


class SearchProvider(Protocol):
    def search(self, query: str, max_results: int) -> List[Snippet]:
        ...


def _normalize_query(query: str) -> str:
    return " ".join(tokenize(query))


class FixtureSearchProvider:
    """Serves ranked snippets from a local JSON corpus keyed by query.

    Corpus shape: {"<query>": [{"id": ..., "text": ...}, ...]}. Lookup
    normalizes the query with the shared tokenizer, so punctuation and
    case differences do not miss.
    """

    def __init__(self, corpus: Dict[str, List[Dict[str, str]]]):
        self._corpus: Dict[str, List[Snippet]] = {}
        for key, entries in corpus.items():
            self._corpus[_normalize_query(key)] = [
                Snippet(str(e.get("id", f"s{i}")), str(e.get("text", "")))
                for i, e in enumerate(entries)
            ]

    @classmethod
    def from_file(cls, path: str) -> "FixtureSearchProvider":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"search corpus {path}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ParseError(f"search corpus {path}: expected an object")
        return cls(data)

    def search(self, query: str, max_results: int) -> List[Snippet]:
        hits = self._corpus.get(_normalize_query(query))
        if not hits:
            raise NoResults(f"no corpus entry for query {query!r}")
        return hits[:max_results]


class RemoteSearchProvider:
    """HTTP GET search: `endpoint?q=<query>&n=<max>` returning JSON snippets."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def search(self, query: str, max_results: int) -> List[Snippet]:
        try:
            resp = requests.get(
                self.endpoint, params={"q": query, "n": max_results}, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise RemoteError(f"search request failed: {exc}") from exc
        if resp.status_code != 200:
            raise RemoteError(f"search returned HTTP {resp.status_code}", status=resp.status_code)
        try:
            data = resp.json()
            hits = [Snippet(str(e["id"]), str(e["text"])) for e in data]
        except (ValueError, KeyError, TypeError) as exc:
            raise RemoteError(f"malformed search response: {resp.text[:200]}") from exc
        if not hits:
            raise NoResults(f"remote search found nothing for {query!r}")
        return hits[:max_results]


class ComputeClient:
    """Remote compute service: HTTP GET with an `input` query parameter."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def compute(self, expression: str) -> str:
        try:
            resp = requests.get(self.endpoint, params={"input": expression}, timeout=self.timeout)
        except requests.RequestException as exc:
            raise RemoteError(f"compute request failed: {exc}") from exc
        if resp.status_code != 200:
            raise RemoteError(f"compute returned HTTP {resp.status_code}", status=resp.status_code)
        return resp.text.strip()


# --------------------------------------------------------------------------
# Tool implementations
# --------------------------------------------------------------------------

CODE_INSTRUCTION = (
    "Write a short program that performs the step. Print the result. "
    "Reply with code only."
)
MATH_INSTRUCTION = (
    "Restate the step as one arithmetic expression using numbers and "
    "+ - * / ^ ( ) only. Reply with the expression only."
)
SEARCH_INSTRUCTION = (
    "Craft a short keyword search query for the step. Reply with the query only."
)


def code_tool(
    backend: Optional[ModelBackend],
    step_description: str,
    history_digest: str,
    sandbox_cfg: SandboxConfig,
    instruction: Optional[str] = None,
) -> ToolOutcome:
    """Have `backend` write a snippet for the step, then execute it.

    success means exit code 0 within the timeout; `raw` is the captured
    stdout and `reformulated` is "Result: <last stdout line>". Backend
    failures, timeouts, and nonzero exits all land in a failed outcome.
    """
    if backend is None:
        return _failure("BackendFailure: no code backend configured")
    payload = step_description
    if history_digest:
        payload = f"{step_description}\n\nHistory: {history_digest}"
    try:
        snippet = strip_code_fences(backend_complete(backend, instruction or CODE_INSTRUCTION, payload))
    except BackendFailure as exc:
        return _failure(f"BackendFailure: {exc}")
    result = run_snippet(snippet, sandbox_cfg)
    if result.timed_out:
        return _failure(
            f"Timeout: snippet exceeded {sandbox_cfg.timeout_s}s",
            raw=result.stdout,
            tool_input=snippet,
        )
    if result.exit_code != 0:
        tail = result.stderr.strip().splitlines()
        detail = tail[-1] if tail else f"exit code {result.exit_code}"
        return _failure(
            f"NonzeroExit: {detail}",
            raw=result.stdout + result.stderr,
            tool_input=snippet,
        )
    return ToolOutcome(
        raw=result.stdout,
        reformulated=reformulate_stdout(result.stdout),
        success=True,
        tool_input=snippet,
    )


def math_tool(
    backend: Optional[ModelBackend],
    expression_or_step: str,
    compute_client: Optional[ComputeClient] = None,
    instruction: Optional[str] = None,
) -> ToolOutcome:
    """Evaluate a math step.

    When a compute client is configured it is queried first; on RemoteError
    the built-in evaluator takes over and the fallback is noted in
    `error_detail` (the outcome still succeeds). Without a client the input
    is evaluated directly; if it does not parse and a backend is available,
    the backend is asked to extract an expression first.
    """
    candidate = expression_or_step.strip()
    note: Optional[str] = None
    if compute_client is not None:
        try:
            text = compute_client.compute(candidate)
            return ToolOutcome(
                raw=text,
                reformulated=f"Result: {text}",
                success=True,
                tool_input=candidate,
            )
        except RemoteError as exc:
            note = f"remote compute unavailable ({exc}); evaluated locally"
            logger.warning(note)
    try:
        value = evaluate_arithmetic(candidate)
    except EvalError as first_err:
        if backend is None:
            return _failure(f"EvalError: {first_err}", tool_input=candidate)
        try:
            candidate = strip_code_fences(
                backend_complete(backend, instruction or MATH_INSTRUCTION, expression_or_step)
            ).strip()
        except BackendFailure as exc:
            return _failure(f"BackendFailure: {exc}")
        try:
            value = evaluate_arithmetic(candidate)
        except EvalError as exc:
            return _failure(f"EvalError: {exc}", tool_input=candidate)
    text = format_number(value)
    return ToolOutcome(
        raw=text,
        reformulated=f"Result: {text}",
        success=True,
        error_detail=note,
        tool_input=candidate,
    )


def search_tool(
    backend: Optional[ModelBackend],
    sub_task: str,
    provider: Optional[SearchProvider],
    instruction: Optional[str] = None,
    max_results: int = 5,
) -> ToolOutcome:
    """Craft a query with `backend` and run it through `provider`.

    `raw` is the full ranked result list as JSON; `reformulated` is the top
    snippet prefixed with its source id. Without a backend the sub-task
    itself is used as the query.
    """
    if provider is None:
        return _failure("NoResults: no search provider configured")
    if backend is None:
        query = sub_task.strip()
    else:
        try:
            query = backend_complete(backend, instruction or SEARCH_INSTRUCTION, sub_task).strip()
        except BackendFailure as exc:
            return _failure(f"BackendFailure: {exc}")
    try:
        hits = provider.search(query, max_results)
    except NoResults as exc:
        return _failure(f"NoResults: {exc}", tool_input=query)
    except RemoteError as exc:
        return _failure(f"RemoteError: {exc}", tool_input=query)
    raw = json.dumps([{"id": s.id, "text": s.text} for s in hits], ensure_ascii=False)
    top = hits[0]
    return ToolOutcome(
        raw=raw,
        reformulated=f"[{top.id}] {top.text}",
        success=True,
        tool_input=query,
    )


def kg_query_tool(
    graph: Optional[PropertyGraph],
    query: str,
    k: int,
    embedder: Optional[Embedder],
    token_budget: int = 256,
) -> ToolOutcome:
    """Retrieve graph context for `query` and pack it within the budget.

    `raw` is the serialized retrieval context; `reformulated` is the
    assembled text. Fails with "no knowledge found" when nothing matches.
    """
    if graph is None or embedder is None or graph.node_count() == 0:
        ctx = RetrievalContext(query=query)
    else:
        ctx = retrieve(graph, query, k, embedder)
    raw = ctx.to_json()
    if not ctx.hits:
        return _failure(f"no knowledge found for query {query!r}", raw=raw, tool_input=query)
    return ToolOutcome(
        raw=raw,
        reformulated=assemble_context(ctx, token_budget),
        success=True,
        tool_input=query,
    )


# --------------------------------------------------------------------------
# Default registry
# --------------------------------------------------------------------------

def _code_handler(engine, step: str, instruction: str) -> ToolOutcome:
    return code_tool(
        engine.backends.get("code"), step, "", engine.sandbox, instruction=instruction
    )


def _math_handler(engine, step: str, instruction: str) -> ToolOutcome:
    return math_tool(
        engine.backends.get("math"), step, engine.compute_client, instruction=instruction
    )


def _search_handler(engine, step: str, instruction: str) -> ToolOutcome:
    return search_tool(
        engine.backends.get("search"), step, engine.search_provider, instruction=instruction
    )


def _kg_handler(engine, step: str, instruction: str) -> ToolOutcome:
    return kg_query_tool(
        engine.graph, step, engine.retrieval_k, engine.embedder, engine.context_budget
    )


def build_default_registry() -> ToolRegistry:
    registry = ToolRegistry()
    outcome_schema = {
        "raw": "string",
        "reformulated": "string",
        "success": "bool",
        "error_detail": "string",
    }
    registry.register(
        ToolProtocol(
            name="code",
            overview="write and execute a program for numeric or procedural steps",
            args=(ArgSpec("snippet", "string", True, "program text to execute"),),
            response_schema=outcome_schema,
        ),
        _code_handler,
    )
    registry.register(
        ToolProtocol(
            name="math",
            overview="evaluate an arithmetic expression exactly",
            args=(ArgSpec("expression", "string", True, "arithmetic expression"),),
            response_schema=outcome_schema,
        ),
        _math_handler,
    )
    registry.register(
        ToolProtocol(
            name="search",
            overview="look up facts in the document corpus or the web",
            args=(
                ArgSpec("query", "string", True, "keyword search query"),
                ArgSpec("max_results", "int", False, "result cap"),
            ),
            response_schema=outcome_schema,
        ),
        _search_handler,
    )
    registry.register(
        ToolProtocol(
            name="kgquery",
            overview="retrieve related facts and passages from the knowledge graph",
            args=(
                ArgSpec("query", "string", True, "natural language query"),
                ArgSpec("k", "int", False, "number of entity seeds"),
            ),
            response_schema=outcome_schema,
        ),
        _kg_handler,
    )
    return registry
