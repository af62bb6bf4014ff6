"""grasolve: graph-grounded stepwise task solving and evaluation.

A property-graph knowledge store with a document ingestion pipeline, exact
cosine retrieval, an iterative plan/execute/reflect/revise solve loop over
pluggable tool experts, and a four-stage evaluation harness.
"""

from .backends import ModelBackend, RemoteBackend, ScriptedBackend, load_script
from .dedup import DedupReport, dedup_entities, levenshtein
from .embeddings import Embedder, FixtureEmbedder, HashingEmbedder
from .errors import (
    BackendFailure,
    ConfigError,
    DimensionMismatch,
    DuplicateId,
    EmptyGoldSet,
    EvalError,
    ExtractorFailure,
    GrasolveError,
    IndexOutOfRange,
    IntegrityError,
    InvalidParams,
    KindMismatch,
    LengthMismatch,
    MissingEndpoint,
    MissingNode,
    NoResults,
    ParseError,
    ParseFault,
    RaggedTable,
    RemoteError,
    ScriptExhausted,
    TemplateError,
    UnbalancedScopes,
    UnknownTool,
)
from .evalrun import EvalRecord, MetricReport, load_dataset, run_eval
from .graph import Edge, EdgeLabel, Node, NodeKind, PropertyGraph, cosine, export_graph, import_graph
from .ingest import (
    Chunk,
    FixtureTripleExtractor,
    IngestReport,
    ParsedDocument,
    Triple,
    chunk_text,
    ingest_document,
    parse_document,
)
from .metrics import (
    PlanPrediction,
    bleu,
    comp_at_k,
    exact_match,
    ndcg_at_k,
    recall_at_k,
    rouge_l,
    task_planning_metrics,
    tool_calling_metrics,
)
from .orchestrator import (
    Engine,
    PromptTemplates,
    SolutionHistory,
    SolutionStep,
    Task,
    Trajectory,
    TrajectoryStatus,
    TrajectoryStep,
    export_trajectory,
    import_trajectories,
    solve,
)
from .retrieval import RetrievalContext, assemble_context, retrieve
from .sandbox import SandboxConfig, SandboxResult, run_snippet
from .skeleton import CodeUnit, reconstruct_source, skeletonize_code, write_code_units
from .tools import (
    ArgSpec,
    ToolCall,
    ToolOutcome,
    ToolProtocol,
    ToolRegistry,
    ValidationReport,
    build_default_registry,
    validate_call,
)

__version__ = "0.1.0"
