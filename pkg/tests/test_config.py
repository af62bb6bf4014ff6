"""Tests for config parsing, environment overrides, and engine wiring."""

import json

import pytest

from grasolve.backends import RemoteBackend, ScriptedBackend
from grasolve.config import (
    EngineConfig,
    build_embedder,
    build_engine,
    load_config,
    load_graph,
    parse_config_text,
    save_graph,
)
from grasolve.embeddings import FixtureEmbedder, HashingEmbedder
from grasolve.errors import ConfigError, TemplateError
from grasolve.graph import Node, NodeKind, PropertyGraph
from grasolve.tools import ComputeClient, FixtureSearchProvider, RemoteSearchProvider


class TestParseConfigText:
    def test_basic_pairs(self):
        text = "# a comment\n\nk = 4\ngraph = kb.jsonl\n"
        assert parse_config_text(text) == {"k": "4", "graph": "kb.jsonl"}

    def test_value_may_contain_equals(self):
        values = parse_config_text("backend.action = scripted:file=a.jsonl")
        assert values["backend.action"] == "scripted:file=a.jsonl"

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="<config>:2: expected 'key = value'"):
            parse_config_text("k = 1\njust words\n")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key 'velocity'"):
            parse_config_text("velocity = 9")

    def test_secret_like_key_rejected(self):
        # bearer tokens have no config-file spelling at all
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("token = sekrit")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="config.conf:3: duplicate key 'k'"):
            parse_config_text("k = 1\n# sep\nk = 2", source="config.conf")

    def test_backend_role_keys(self):
        values = parse_config_text(
            "backend.action = scripted:a\nbackend.code = scripted:b"
        )
        assert set(values) == {"backend.action", "backend.code"}

    def test_unknown_backend_role(self):
        with pytest.raises(ConfigError, match="unknown key 'backend.dance'"):
            parse_config_text("backend.dance = scripted:x")

    def test_per_tool_template_key(self):
        values = parse_config_text("template.expert.code = tmpl.txt")
        assert values == {"template.expert.code": "tmpl.txt"}


class TestEngineConfigFromValues:
    def test_defaults(self):
        cfg = EngineConfig.from_values({})
        assert cfg.dim == 64 and cfg.window == 128 and cfg.stride == 64
        assert cfg.retrieval_k == 5 and cfg.context_budget == 256
        assert cfg.max_steps == 10 and cfg.max_repairs == 3 and cfg.retries == 1
        assert cfg.embedder_spec == "hash"
        assert cfg.token_env == "GRASOLVE_API_TOKEN"
        assert cfg.sandbox_timeout == 10.0

    def test_int_parsing(self):
        cfg = EngineConfig.from_values({"k": "7", "max_steps": "2"})
        assert cfg.retrieval_k == 7 and cfg.max_steps == 2

    def test_bad_int(self):
        with pytest.raises(ConfigError, match="k: expected an integer, got 'many'"):
            EngineConfig.from_values({"k": "many"})

    def test_minimums_enforced(self):
        with pytest.raises(ConfigError, match="max_steps: must be >= 1"):
            EngineConfig.from_values({"max_steps": "0"})
        with pytest.raises(ConfigError, match="retries: must be >= 0"):
            EngineConfig.from_values({"retries": "-1"})
        # budget 0 is allowed (degenerate but valid)
        assert EngineConfig.from_values({"budget": "0"}).context_budget == 0

    def test_bad_float(self):
        with pytest.raises(ConfigError, match="sandbox.timeout: expected a number"):
            EngineConfig.from_values({"sandbox.timeout": "fast"})

    def test_empty_string_paths_mean_unset(self):
        cfg = EngineConfig.from_values({"graph": "", "triples": "", "audit": ""})
        assert cfg.graph_path is None and cfg.triples_path is None
        assert cfg.audit_path is None

    def test_backend_specs_collected(self):
        cfg = EngineConfig.from_values(
            {"backend.action": "scripted:a", "backend.math": "remote:http://x"}
        )
        assert cfg.backend_specs == {
            "action": "scripted:a",
            "math": "remote:http://x",
        }

    def test_template_paths_mapped(self):
        cfg = EngineConfig.from_values(
            {
                "template.action": "a.txt",
                "template.expert": "e.txt",
                "template.expert.code": "c.txt",
            }
        )
        assert cfg.template_paths == {
            "action": "a.txt",
            "expert": "e.txt",
            "expert.code": "c.txt",
        }


class TestLoadConfig:
    def test_missing_file(self):
        with pytest.raises(ConfigError, match="config file not found"):
            load_config("/nonexistent/engine.conf", environ={})

    def test_none_path_uses_defaults(self):
        cfg = load_config(None, environ={})
        assert cfg.retrieval_k == 5

    def test_file_values(self, tmp_path):
        path = tmp_path / "engine.conf"
        path.write_text("k = 9\nmax_repairs = 2\n", encoding="utf-8")
        cfg = load_config(str(path), environ={})
        assert cfg.retrieval_k == 9 and cfg.max_repairs == 2

    def test_env_overrides_file(self, tmp_path):
        path = tmp_path / "engine.conf"
        path.write_text("k = 9\n", encoding="utf-8")
        cfg = load_config(str(path), environ={"GRASOLVE_K": "2"})
        assert cfg.retrieval_k == 2

    def test_env_alone_sets_keys(self):
        cfg = load_config(
            None,
            environ={
                "GRASOLVE_MAX_STEPS": "4",
                "GRASOLVE_BACKEND_ACTION": "scripted:s.jsonl",
            },
        )
        assert cfg.max_steps == 4
        assert cfg.backend_specs == {"action": "scripted:s.jsonl"}

    def test_unrelated_env_ignored(self):
        cfg = load_config(None, environ={"GRASOLVE_VELOCITY": "9", "PATH": "/bin"})
        assert cfg == load_config(None, environ={})

    def test_env_override_is_validated(self):
        with pytest.raises(ConfigError, match="expected an integer"):
            load_config(None, environ={"GRASOLVE_K": "lots"})


class TestBuildEmbedder:
    def test_hash_default(self):
        emb = build_embedder(EngineConfig.from_values({"dim": "16"}))
        assert isinstance(emb, HashingEmbedder)
        assert len(emb.embed("pump")) == 16

    def test_fixture_spec(self, tmp_path):
        path = tmp_path / "vectors.json"
        path.write_text(
            json.dumps({"dim": 2, "vectors": {"pump": [1.0, 0.0]}}), encoding="utf-8"
        )
        emb = build_embedder(EngineConfig.from_values({"embedder": f"fixture:{path}"}))
        assert isinstance(emb, FixtureEmbedder)
        assert emb.embed("pump") == [1.0, 0.0]

    def test_fixture_missing_file(self):
        with pytest.raises(ConfigError, match="embedder: file not found"):
            build_embedder(EngineConfig.from_values({"embedder": "fixture:/gone.json"}))

    def test_unknown_spec(self):
        with pytest.raises(ConfigError, match="unknown spec 'neural'"):
            build_embedder(EngineConfig.from_values({"embedder": "neural"}))


class TestGraphLoadSave:
    def test_no_path_empty_graph(self):
        g = load_graph(EngineConfig.from_values({}))
        assert g.node_count() == 0

    def test_missing_file_empty_graph(self, tmp_path):
        cfg = EngineConfig.from_values({"graph": str(tmp_path / "new.jsonl")})
        assert load_graph(cfg).node_count() == 0

    def test_round_trip(self, tmp_path):
        path = tmp_path / "kb.jsonl"
        cfg = EngineConfig.from_values({"graph": str(path), "dim": "2"})
        g = PropertyGraph(dim=2)
        g.add_node(Node("ent:a", NodeKind.ENTITY, {"name": "a"}, embedding=[1.0, 0.0]))
        save_graph(cfg, g)
        assert load_graph(cfg).node_count() == 1

    def test_dim_mismatch(self, tmp_path):
        path = tmp_path / "kb.jsonl"
        g = PropertyGraph(dim=2)
        g.add_node(Node("ent:a", NodeKind.ENTITY, {}, embedding=[1.0, 0.0]))
        save_graph(EngineConfig.from_values({"graph": str(path), "dim": "2"}), g)
        with pytest.raises(ConfigError, match="graph dimension 2 does not match"):
            load_graph(EngineConfig.from_values({"graph": str(path), "dim": "64"}))

    def test_save_without_path(self):
        with pytest.raises(ConfigError, match="no graph path"):
            save_graph(EngineConfig.from_values({}), PropertyGraph())


class TestBuildEngine:
    def write_script(self, tmp_path, name="script.jsonl"):
        path = tmp_path / name
        path.write_text(
            json.dumps({"tag": "action", "index": 0, "response": "FINAL: ok"}) + "\n",
            encoding="utf-8",
        )
        return str(path)

    def test_scripted_backend(self, tmp_path):
        script = self.write_script(tmp_path)
        cfg = EngineConfig.from_values({"backend.action": f"scripted:{script}"})
        engine = build_engine(cfg, environ={})
        assert isinstance(engine.backends["action"], ScriptedBackend)
        assert engine.solve("any task").final_answer == "ok"

    def test_scripted_needs_path(self):
        cfg = EngineConfig.from_values({"backend.action": "scripted:"})
        with pytest.raises(ConfigError, match="scripted spec needs a path"):
            build_engine(cfg, environ={})

    def test_scripted_missing_file(self):
        cfg = EngineConfig.from_values({"backend.action": "scripted:/gone.jsonl"})
        with pytest.raises(ConfigError, match="backend.action: file not found"):
            build_engine(cfg, environ={})

    def test_unknown_backend_kind(self):
        cfg = EngineConfig.from_values({"backend.action": "psychic:ball"})
        with pytest.raises(ConfigError, match="unknown backend kind 'psychic'"):
            build_engine(cfg, environ={})

    def test_remote_backend_token_from_env(self):
        cfg = EngineConfig.from_values(
            {"backend.action": "remote:http://127.0.0.1:1/v1", "remote.model": "m-1"}
        )
        engine = build_engine(cfg, environ={"GRASOLVE_API_TOKEN": "tok-123"})
        backend = engine.backends["action"]
        assert isinstance(backend, RemoteBackend)
        assert backend._token == "tok-123"
        assert backend.model == "m-1"

    def test_custom_token_env_name(self):
        cfg = EngineConfig.from_values(
            {"backend.action": "remote:http://127.0.0.1:1", "token.env": "MY_TOKEN"}
        )
        engine = build_engine(cfg, environ={"MY_TOKEN": "other"})
        assert engine.backends["action"]._token == "other"

    def test_remote_backend_without_token(self):
        cfg = EngineConfig.from_values({"backend.action": "remote:http://127.0.0.1:1"})
        engine = build_engine(cfg, environ={})
        assert engine.backends["action"]._token is None

    def test_search_corpus_provider(self, tmp_path):
        corpus = tmp_path / "corpus.json"
        corpus.write_text(json.dumps({"q": [{"id": "a", "text": "t"}]}), encoding="utf-8")
        cfg = EngineConfig.from_values({"search.corpus": str(corpus)})
        engine = build_engine(cfg, environ={})
        assert isinstance(engine.search_provider, FixtureSearchProvider)

    def test_search_endpoint_provider(self):
        cfg = EngineConfig.from_values({"search.endpoint": "http://127.0.0.1:1/s"})
        engine = build_engine(cfg, environ={})
        assert isinstance(engine.search_provider, RemoteSearchProvider)

    def test_corpus_wins_over_endpoint(self, tmp_path):
        corpus = tmp_path / "corpus.json"
        corpus.write_text("{}", encoding="utf-8")
        cfg = EngineConfig.from_values(
            {"search.corpus": str(corpus), "search.endpoint": "http://127.0.0.1:1"}
        )
        engine = build_engine(cfg, environ={})
        assert isinstance(engine.search_provider, FixtureSearchProvider)

    def test_compute_client(self):
        cfg = EngineConfig.from_values({"compute.endpoint": "http://127.0.0.1:1/c"})
        engine = build_engine(cfg, environ={})
        assert isinstance(engine.compute_client, ComputeClient)

    def test_no_providers_by_default(self):
        engine = build_engine(EngineConfig.from_values({}), environ={})
        assert engine.search_provider is None and engine.compute_client is None

    def test_numeric_knobs_reach_engine(self, tmp_path):
        cfg = EngineConfig.from_values(
            {
                "k": "2",
                "budget": "99",
                "max_steps": "4",
                "max_repairs": "1",
                "retries": "0",
                "sandbox.timeout": "3.5",
                "sandbox.max_concurrent": "2",
            }
        )
        engine = build_engine(cfg, environ={})
        assert engine.retrieval_k == 2 and engine.context_budget == 99
        assert engine.max_steps == 4 and engine.max_repairs_per_step == 1
        assert engine.backend_retries == 0
        assert engine.sandbox.timeout_s == 3.5
        assert engine.sandbox.max_concurrent == 2

    def test_template_file_loaded(self, tmp_path):
        tmpl = tmp_path / "action.txt"
        tmpl.write_text("Custom planner.\n{x}\n{history}\n", encoding="utf-8")
        cfg = EngineConfig.from_values({"template.action": str(tmpl)})
        engine = build_engine(cfg, environ={})
        assert engine.templates.action.startswith("Custom planner.")

    def test_per_tool_expert_template(self, tmp_path):
        tmpl = tmp_path / "code.txt"
        tmpl.write_text("Write code.\n{x}\n{history}\n{step}\n", encoding="utf-8")
        cfg = EngineConfig.from_values({"template.expert.code": str(tmpl)})
        engine = build_engine(cfg, environ={})
        assert engine.templates.expert_for("code").startswith("Write code.")
        assert engine.templates.expert_for("math") == engine.templates.expert_default

    def test_bad_template_rejected(self, tmp_path):
        tmpl = tmp_path / "action.txt"
        tmpl.write_text("No placeholders here.", encoding="utf-8")
        cfg = EngineConfig.from_values({"template.action": str(tmpl)})
        with pytest.raises(TemplateError, match="missing placeholders"):
            build_engine(cfg, environ={})

    def test_missing_template_file(self):
        cfg = EngineConfig.from_values({"template.action": "/gone.txt"})
        with pytest.raises(ConfigError, match="template.action: file not found"):
            build_engine(cfg, environ={})

    def test_shipped_replay_config(self, in_repo_root):
        cfg = load_config("fixtures/worked_session.conf", environ={})
        engine = build_engine(cfg, environ={})
        assert set(engine.backends) == {"action", "code"}
        assert engine.registry.names() == ["code", "kgquery", "math", "search"]
        assert engine.max_steps == 10 and engine.max_repairs_per_step == 3
