"""Key-value engine configuration with an environment override layer.

Config files are plain `key = value` lines; `#` starts a full-line comment.
Every known key can be overridden by an environment variable named
GRASOLVE_<KEY> with dots and dashes turned into underscores and uppercased
(e.g. `backend.action` becomes GRASOLVE_BACKEND_ACTION). Secrets never live
in config files: remote bearer tokens are read from the environment
variable named by `token.env` (default GRASOLVE_API_TOKEN).
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Dict, Optional

from .backends import ModelBackend, RemoteBackend, ScriptedBackend, load_script
from .embeddings import Embedder, FixtureEmbedder, HashingEmbedder
from .errors import ConfigError, GrasolveError
from .graph import PropertyGraph, export_graph, import_graph
from .ingest import BackendTripleExtractor, FixtureTripleExtractor, TripleExtractor
from .orchestrator import Engine, PromptTemplates
from .sandbox import SandboxConfig
from .tools import (
    ComputeClient,
    FixtureSearchProvider,
    RemoteSearchProvider,
    SearchProvider,
    build_default_registry,
)

logger = logging.getLogger(__name__)

ENV_PREFIX = "GRASOLVE_"
BACKEND_ROLES = ("action", "code", "math", "search")

_FIXED_KEYS = {
    "graph",
    "dim",
    "window",
    "stride",
    "k",
    "budget",
    "max_steps",
    "max_repairs",
    "retries",
    "embedder",
    "triples",
    "audit",
    "remote.model",
    "token.env",
    "search.corpus",
    "search.endpoint",
    "compute.endpoint",
    "sandbox.timeout",
    "sandbox.max_concurrent",
    "template.action",
    "template.reflect",
    "template.revise",
    "template.expert",
}


def _is_known(key: str) -> bool:
    if key in _FIXED_KEYS:
        return True
    if key.startswith("backend."):
        return key[len("backend."):] in BACKEND_ROLES
    # per-tool expert template override, e.g. template.expert.code
    if key.startswith("template.expert."):
        return bool(key[len("template.expert."):])
    return False


def _env_name(key: str) -> str:
    return ENV_PREFIX + key.replace(".", "_").replace("-", "_").upper()


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not _is_known(key):
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _apply_env(values: Dict[str, str], environ) -> Dict[str, str]:
    merged = dict(values)
    keys = set(values) | _FIXED_KEYS
    keys.update(f"backend.{role}" for role in BACKEND_ROLES)
    for key in sorted(keys):
        override = environ.get(_env_name(key))
        if override is not None:
            merged[key] = override
    return merged


def _require_file(path: str, key: str) -> str:
    if not os.path.isfile(path):
        raise ConfigError(f"{key}: file not found: {path}")
    return path


def _get_int(values: Dict[str, str], key: str, default: int, minimum: int) -> int:
    raw = values.get(key)
    if raw is None:
        return default
    try:
        out = int(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if out < minimum:
        raise ConfigError(f"{key}: must be >= {minimum}, got {out}")
    return out


def _get_float(values: Dict[str, str], key: str, default: float) -> float:
    raw = values.get(key)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None


@dataclass
class EngineConfig:
    """Typed view of a parsed config; `build_engine` wires the parts."""

    graph_path: Optional[str] = None
    dim: int = 64
    window: int = 128
    stride: int = 64
    retrieval_k: int = 5
    context_budget: int = 256
    max_steps: int = 10
    max_repairs: int = 3
    retries: int = 1
    embedder_spec: str = "hash"
    triples_path: Optional[str] = None
    audit_path: Optional[str] = None
    remote_model: str = "default"
    token_env: str = "GRASOLVE_API_TOKEN"
    backend_specs: Dict[str, str] = field(default_factory=dict)
    template_paths: Dict[str, str] = field(default_factory=dict)
    search_corpus: Optional[str] = None
    search_endpoint: Optional[str] = None
    compute_endpoint: Optional[str] = None
    sandbox_timeout: float = 10.0
    sandbox_max_concurrent: int = 4

    @staticmethod
    def from_values(values: Dict[str, str]) -> "EngineConfig":
        cfg = EngineConfig(
            graph_path=values.get("graph") or None,
            dim=_get_int(values, "dim", 64, 1),
            window=_get_int(values, "window", 128, 1),
            stride=_get_int(values, "stride", 64, 1),
            retrieval_k=_get_int(values, "k", 5, 1),
            context_budget=_get_int(values, "budget", 256, 0),
            max_steps=_get_int(values, "max_steps", 10, 1),
            max_repairs=_get_int(values, "max_repairs", 3, 1),
            retries=_get_int(values, "retries", 1, 0),
            embedder_spec=values.get("embedder", "hash"),
            triples_path=values.get("triples") or None,
            audit_path=values.get("audit") or None,
            remote_model=values.get("remote.model", "default"),
            token_env=values.get("token.env", "GRASOLVE_API_TOKEN"),
            search_corpus=values.get("search.corpus") or None,
            search_endpoint=values.get("search.endpoint") or None,
            compute_endpoint=values.get("compute.endpoint") or None,
            sandbox_timeout=_get_float(values, "sandbox.timeout", 10.0),
            sandbox_max_concurrent=_get_int(values, "sandbox.max_concurrent", 4, 1),
        )
        for key, value in values.items():
            if key.startswith("backend."):
                cfg.backend_specs[key[len("backend."):]] = value
            elif key == "template.action":
                cfg.template_paths["action"] = value
            elif key == "template.reflect":
                cfg.template_paths["reflect"] = value
            elif key == "template.revise":
                cfg.template_paths["revise"] = value
            elif key == "template.expert":
                cfg.template_paths["expert"] = value
            elif key.startswith("template.expert."):
                tool = key[len("template.expert."):]
                cfg.template_paths[f"expert.{tool}"] = value
        return cfg


def load_config(path: Optional[str], environ=None) -> EngineConfig:
    """Parse a config file (or just the environment when path is None)."""
    environ = os.environ if environ is None else environ
    values: Dict[str, str] = {}
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            values = parse_config_text(fh.read(), source=path)
    values = _apply_env(values, environ)
    return EngineConfig.from_values(values)


# --------------------------------------------------------------------------
# Wiring
# --------------------------------------------------------------------------

def _build_backend(cfg: EngineConfig, role: str, spec: str, environ) -> ModelBackend:
    kind, _, locator = spec.partition(":")
    if kind == "scripted":
        if not locator:
            raise ConfigError(f"backend.{role}: scripted spec needs a path")
        script = load_script(_require_file(locator, f"backend.{role}"))
        return ScriptedBackend(script, tag=role)
    if kind == "remote":
        if not locator:
            raise ConfigError(f"backend.{role}: remote spec needs a URL")
        token = environ.get(cfg.token_env)
        return RemoteBackend(locator, model=cfg.remote_model, token=token)
    raise ConfigError(f"backend.{role}: unknown backend kind {kind!r}")


def build_embedder(cfg: EngineConfig) -> Embedder:
    spec = cfg.embedder_spec
    if spec == "hash":
        return HashingEmbedder(cfg.dim)
    kind, _, locator = spec.partition(":")
    if kind == "fixture" and locator:
        return FixtureEmbedder.from_file(_require_file(locator, "embedder"))
    raise ConfigError(f"embedder: unknown spec {spec!r}")


def build_extractor(cfg: EngineConfig, backends: Dict[str, ModelBackend]) -> TripleExtractor:
    if cfg.triples_path is not None:
        return FixtureTripleExtractor.from_file(
            _require_file(cfg.triples_path, "triples")
        )
    # no fixture: an action backend can extract, otherwise extract nothing
    backend = backends.get("action")
    if backend is not None:
        return BackendTripleExtractor(backend)
    return FixtureTripleExtractor({})


def load_graph(cfg: EngineConfig) -> PropertyGraph:
    """Import the configured graph; a missing file is an empty graph so the
    first ingest run can create it."""
    if cfg.graph_path and os.path.isfile(cfg.graph_path):
        graph = import_graph(cfg.graph_path)
        if graph.dim is not None and graph.dim != cfg.dim:
            raise ConfigError(
                f"graph dimension {graph.dim} does not match configured dim {cfg.dim}"
            )
        return graph
    return PropertyGraph()


def save_graph(cfg: EngineConfig, graph: PropertyGraph) -> None:
    if not cfg.graph_path:
        raise ConfigError("no graph path configured")
    export_graph(graph, cfg.graph_path)


def _load_templates(cfg: EngineConfig) -> PromptTemplates:
    kwargs: Dict[str, object] = {}
    experts: Dict[str, str] = {}
    for name, path in cfg.template_paths.items():
        text = _read_text(_require_file(path, f"template.{name}"))
        if name == "action":
            kwargs["action"] = text
        elif name == "reflect":
            kwargs["reflect"] = text
        elif name == "revise":
            kwargs["revise"] = text
        elif name == "expert":
            kwargs["expert_default"] = text
        elif name.startswith("expert."):
            experts[name[len("expert."):]] = text
    if experts:
        kwargs["experts"] = experts
    return PromptTemplates(**kwargs)


def _read_text(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def build_engine(cfg: EngineConfig, environ=None) -> Engine:
    """Construct a ready Engine from the config. Referenced fixture files
    (scripts, templates, corpora) must exist; the graph file may not yet."""
    environ = os.environ if environ is None else environ
    backends: Dict[str, ModelBackend] = {}
    for role, spec in sorted(cfg.backend_specs.items()):
        backends[role] = _build_backend(cfg, role, spec, environ)

    search_provider: Optional[SearchProvider] = None
    if cfg.search_corpus is not None:
        search_provider = FixtureSearchProvider.from_file(
            _require_file(cfg.search_corpus, "search.corpus")
        )
    elif cfg.search_endpoint is not None:
        search_provider = RemoteSearchProvider(cfg.search_endpoint)

    compute_client: Optional[ComputeClient] = None
    if cfg.compute_endpoint is not None:
        compute_client = ComputeClient(cfg.compute_endpoint)

    return Engine(
        registry=build_default_registry(),
        backends=backends,
        templates=_load_templates(cfg),
        graph=load_graph(cfg),
        embedder=build_embedder(cfg),
        sandbox=SandboxConfig(
            timeout_s=cfg.sandbox_timeout,
            max_concurrent=cfg.sandbox_max_concurrent,
        ),
        search_provider=search_provider,
        compute_client=compute_client,
        retrieval_k=cfg.retrieval_k,
        context_budget=cfg.context_budget,
        max_steps=cfg.max_steps,
        max_repairs_per_step=cfg.max_repairs,
        backend_retries=cfg.retries,
        audit_path=cfg.audit_path,
    )
