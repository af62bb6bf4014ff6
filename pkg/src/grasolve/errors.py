"""Exception types shared across the package.

Every error raised by the library derives from :class:`GrasolveError` so
callers can catch domain failures with a single except clause while letting
programming errors (TypeError and friends) propagate.
"""

from __future__ import annotations


class GrasolveError(Exception):
    """Base class for all library-defined failures."""


class InvalidParams(GrasolveError):
    """A caller-supplied parameter violates a documented precondition."""


# --------------------------------------------------------------------------
# Graph store
# --------------------------------------------------------------------------

class DuplicateId(GrasolveError):
    """A node with this id already exists in the graph."""


class DimensionMismatch(GrasolveError):
    """An embedding's length differs from the store's configured dimension."""


class MissingEndpoint(GrasolveError):
    """An edge references a node id that is not in the graph."""


class KindMismatch(GrasolveError):
    """An edge label is incompatible with its endpoint node kinds."""


class MissingNode(GrasolveError):
    """A referenced node id is absent from the graph."""


class MixedKinds(GrasolveError):
    """A merge group contains nodes of more than one kind."""


class ParseError(GrasolveError):
    """Malformed serialized input. Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IntegrityError(GrasolveError):
    """Structurally valid input that violates a graph invariant."""


# --------------------------------------------------------------------------
# Ingestion
# --------------------------------------------------------------------------

class ExtractorFailure(GrasolveError):
    """The triple extractor failed on a chunk. Carries the chunk id."""

    def __init__(self, message: str, chunk_id: str = ""):
        self.chunk_id = chunk_id
        if chunk_id:
            message = f"chunk {chunk_id}: {message}"
        super().__init__(message)


class RaggedTable(GrasolveError):
    """A table row's cell count differs from the column count."""


class UnbalancedScopes(GrasolveError):
    """Source text closes more scopes than it opens, or leaves scopes open."""


# --------------------------------------------------------------------------
# Tools and backends
# --------------------------------------------------------------------------

class UnknownTool(GrasolveError):
    """Lookup of a tool name not present in the registry."""


class EvalError(GrasolveError):
    """The arithmetic evaluator rejected an expression."""


class BackendFailure(GrasolveError):
    """A model backend could not produce a completion."""


class RemoteError(BackendFailure):
    """A remote HTTP service call failed. Carries status when known."""

    def __init__(self, message: str, status: int | None = None):
        self.status = status
        super().__init__(message)


class NoResults(GrasolveError):
    """A search provider returned an empty result set."""


class ScriptExhausted(BackendFailure):
    """A scripted backend has no remaining response for the requested slot."""


# --------------------------------------------------------------------------
# Orchestrator
# --------------------------------------------------------------------------

class ParseFault(GrasolveError):
    """Model output did not match the expected reply grammar.

    Carries the raw text so recovery can inspect or log it.
    """

    def __init__(self, message: str, raw: str = ""):
        self.raw = raw
        super().__init__(message)


class IndexOutOfRange(GrasolveError):
    """A fault report referenced a step index outside the history."""


class TemplateError(GrasolveError):
    """A prompt template is missing a required placeholder or names an unknown one."""


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------

class LengthMismatch(GrasolveError):
    """Paired sequences passed to a metric have different lengths."""


class EmptyGoldSet(GrasolveError):
    """A retrieval metric received an empty gold set for some query."""


class ConfigError(GrasolveError):
    """A configuration file is malformed or references a missing path."""
