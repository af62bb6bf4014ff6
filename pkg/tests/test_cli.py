"""End-to-end tests for the command line interface.

Every test drives main() in-process with an explicit argv and reads
stdout/stderr through capsys, so exit codes and printed text are pinned
without spawning subprocesses.
"""

import json
import shutil

import pytest

from grasolve.cli import main
from grasolve.embeddings import HashingEmbedder
from grasolve.graph import Node, NodeKind, PropertyGraph, export_graph

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

REPLAY_QUESTION = (
    "Calculate the volume occupied by 88 lb of CO2 at 15 degrees C "
    "and a pressure of 32.2 ft of water."
)


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def ingest_conf(tmp_path, fixtures_dir):
    """Config whose triples extractor reads the shipped fixture script."""
    conf = tmp_path / "ingest.conf"
    conf.write_text(f"triples = {fixtures_dir / 'sample_triples.json'}\n")
    return conf


@pytest.fixture
def ingested_graph(capsys, tmp_path, ingest_conf, fixtures_dir):
    graph_path = tmp_path / "kb.jsonl"
    code, _, _ = run_cli(
        capsys,
        "ingest",
        "--config", str(ingest_conf),
        "--graph", str(graph_path),
        str(fixtures_dir / "sample_doc.json"),
    )
    assert code == 0
    return graph_path


@pytest.fixture
def dup_graph(tmp_path):
    """Graph with two near-duplicate entities sharing an embedding."""
    emb = HashingEmbedder(dim=64)
    graph = PropertyGraph(dim=64)
    vec = emb.embed("centrifugal pump")
    graph.add_node(Node("ent:pump", NodeKind.ENTITY, {"name": "pump"}, vec))
    graph.add_node(Node("ent:pumps", NodeKind.ENTITY, {"name": "pumps"}, vec))
    graph.add_node(
        Node(
            "ent:valve",
            NodeKind.ENTITY,
            {"name": "butterfly valve"},
            emb.embed("butterfly valve"),
        )
    )
    path = tmp_path / "dup.jsonl"
    export_graph(graph, path)
    return path


class TestExitCodes:
    def test_no_subcommand_is_usage_error(self, capsys):
        code, _, err = run_cli(capsys)
        assert code == 2
        assert "usage:" in err

    def test_unknown_subcommand(self, capsys):
        code, _, err = run_cli(capsys, "frobnicate")
        assert code == 2
        assert "invalid choice" in err

    def test_missing_positional(self, capsys):
        code, _, err = run_cli(capsys, "solve")
        assert code == 2
        assert "usage:" in err

    def test_bare_graph_needs_action(self, capsys):
        code, _, err = run_cli(capsys, "graph")
        assert code == 2
        assert "action" in err

    def test_help_exits_zero(self, capsys):
        code, out, _ = run_cli(capsys, "--help")
        assert code == 0
        assert "usage:" in out

    def test_subcommand_help_exits_zero(self, capsys):
        code, out, _ = run_cli(capsys, "solve", "--help")
        assert code == 0
        assert "--max-steps" in out

    def test_domain_error_exits_one(self, capsys, tmp_path):
        conf = tmp_path / "bad.conf"
        conf.write_text(f"backend.action = scripted:{tmp_path}/nope.jsonl\n")
        code, _, err = run_cli(capsys, "solve", "--config", str(conf), "q")
        assert code == 1
        assert err.startswith("error: ")
        assert "file not found" in err

    def test_missing_config_file_exits_one(self, capsys, tmp_path):
        code, _, err = run_cli(
            capsys, "solve", "--config", str(tmp_path / "ghost.conf"), "q"
        )
        assert code == 1
        assert err.startswith("error: ")

    def test_config_parse_error_reports_line(self, capsys, tmp_path):
        conf = tmp_path / "odd.conf"
        conf.write_text("# fine\nvelocity = 9\n")
        code, _, err = run_cli(capsys, "solve", "--config", str(conf), "q")
        assert code == 1
        assert ":2: unknown key" in err

    def test_missing_document_exits_one(self, capsys, tmp_path):
        code, _, err = run_cli(
            capsys, "ingest", "--graph", str(tmp_path / "kb.jsonl"),
            str(tmp_path / "ghost.json"),
        )
        assert code == 1
        assert err.startswith("error: ")


class TestSolve:
    def test_replay_layout(self, capsys, in_repo_root):
        code, out, _ = run_cli(
            capsys,
            "solve", "--config", "fixtures/worked_session.conf", REPLAY_QUESTION,
        )
        assert code == 0
        assert out.startswith("Task: Calculate the volume occupied by 88 lb")
        assert "Step 1:" in out
        assert "Step 2:" in out
        assert "  Tool: code" in out
        # snippet continuation lines carry the four-space hang
        assert "\n    ft_to_atm = 0.0294" in out
        assert "  Output: 0.9466800000000001" in out
        assert "  Result: Result: 49.97911649131703" in out
        assert "Final Answer:" in out
        assert "49.8" in out
        assert out.rstrip().endswith("Status: solved")

    def test_steps_precede_final_answer(self, capsys, in_repo_root):
        code, out, _ = run_cli(
            capsys,
            "solve", "--config", "fixtures/worked_session.conf", REPLAY_QUESTION,
        )
        assert code == 0
        assert out.index("Step 1:") < out.index("Step 2:") < out.index("Final Answer:")

    def test_trajectory_flag_appends_jsonl(self, capsys, tmp_path, in_repo_root):
        traj = tmp_path / "runs.jsonl"
        for expected_lines in (1, 2):
            code, _, _ = run_cli(
                capsys,
                "solve", "--config", "fixtures/worked_session.conf",
                "--trajectory", str(traj), REPLAY_QUESTION,
            )
            assert code == 0
            lines = traj.read_text().splitlines()
            assert len(lines) == expected_lines
        record = json.loads(lines[-1])
        assert record["status"] == "solved"
        assert "49.8" in record["final_answer"]

    def test_solve_leaves_graph_untouched(self, capsys, tmp_path, in_repo_root, fixtures_dir):
        graph_copy = tmp_path / "kb.jsonl"
        shutil.copyfile(fixtures_dir / "graph50.jsonl", graph_copy)
        before = graph_copy.read_bytes()
        code, _, _ = run_cli(
            capsys,
            "solve", "--config", "fixtures/worked_session.conf",
            "--graph", str(graph_copy), REPLAY_QUESTION,
        )
        assert code == 0
        assert graph_copy.read_bytes() == before


class TestIngest:
    def test_reports_counts(self, capsys, tmp_path, ingest_conf, fixtures_dir):
        graph_path = tmp_path / "kb.jsonl"
        code, out, _ = run_cli(
            capsys,
            "ingest", "--config", str(ingest_conf),
            "--graph", str(graph_path), str(fixtures_dir / "sample_doc.json"),
        )
        assert code == 0
        assert out == "chunks: 1\nentities: 5\ntriples: 3\nskipped: 0\n"
        assert graph_path.exists()

    def test_idempotent(self, capsys, tmp_path, ingest_conf, fixtures_dir):
        graph_path = tmp_path / "kb.jsonl"
        argv = (
            "ingest", "--config", str(ingest_conf),
            "--graph", str(graph_path), str(fixtures_dir / "sample_doc.json"),
        )
        code, first_out, _ = run_cli(capsys, *argv)
        assert code == 0
        first_bytes = graph_path.read_bytes()
        code, second_out, _ = run_cli(capsys, *argv)
        assert code == 0
        assert second_out == first_out
        assert graph_path.read_bytes() == first_bytes

    def test_resulting_graph_stats(self, capsys, ingested_graph):
        code, out, _ = run_cli(capsys, "graph", "stats", "--graph", str(ingested_graph))
        assert code == 0
        assert out == (
            "nodes: 10\n"
            "edges: 10\n"
            "dim: 64\n"
            "kind chunk: 1\n"
            "kind entity: 5\n"
            "kind image: 1\n"
            "kind row: 2\n"
            "kind table: 1\n"
            "label belongs: 2\n"
            "label mentions: 5\n"
            "label relation: 3\n"
        )


class TestQuery:
    def test_prints_triples_and_chunk(self, capsys, ingested_graph):
        code, out, _ = run_cli(
            capsys,
            "query", "--graph", str(ingested_graph), "shell and tube heat exchanger",
        )
        assert code == 0
        assert "heat exchanger --- transfers --- thermal energy" in out
        assert "shell and tube design routes one stream" in out

    def test_empty_graph_prints_blank_context(self, capsys, tmp_path):
        code, out, _ = run_cli(
            capsys, "query", "--graph", str(tmp_path / "missing.jsonl"), "anything"
        )
        assert code == 0
        assert out == "\n"

    def test_query_leaves_graph_untouched(self, capsys, ingested_graph):
        before = ingested_graph.read_bytes()
        code, _, _ = run_cli(
            capsys, "query", "--graph", str(ingested_graph), "plate exchangers"
        )
        assert code == 0
        assert ingested_graph.read_bytes() == before


class TestEval:
    def test_writes_report_bundle(self, capsys, tmp_path, in_repo_root):
        out_dir = tmp_path / "rep"
        code, out, _ = run_cli(
            capsys,
            "eval", "--config", "fixtures/eval_toy.conf",
            "--out", str(out_dir), "fixtures/eval_toy.jsonl",
        )
        assert code == 0
        assert (out_dir / "report.json").exists()
        assert (out_dir / "report.csv").exists()
        for stage in ("planning", "selection", "calling", "generation"):
            png = out_dir / f"{stage}.png"
            assert png.read_bytes().startswith(PNG_MAGIC)
        assert "stage" in out and "metric" in out
        assert "records: 25  errors: 0" in out
        assert f"report written to {out_dir} (4 figure(s))" in out

    def test_report_values(self, capsys, tmp_path, in_repo_root):
        out_dir = tmp_path / "rep"
        code, _, _ = run_cli(
            capsys,
            "eval", "--config", "fixtures/eval_toy.conf",
            "--out", str(out_dir), "fixtures/eval_toy.jsonl",
        )
        assert code == 0
        payload = json.loads((out_dir / "report.json").read_text())
        assert payload["config"]["dataset"] == "eval_toy.jsonl"
        assert payload["counts"] == {"records": 25, "errors": 0}
        assert payload["stages"]["planning"]["TUA"] == pytest.approx(0.96)
        assert payload["stages"]["generation"]["BLEU"] == pytest.approx(23 / 24)
        assert "EH" not in payload["stages"]["calling"]

    def test_two_runs_byte_identical(self, capsys, tmp_path, in_repo_root):
        blobs = []
        for name in ("a", "b"):
            out_dir = tmp_path / name
            code, _, _ = run_cli(
                capsys,
                "eval", "--config", "fixtures/eval_toy.conf",
                "--out", str(out_dir), "fixtures/eval_toy.jsonl",
            )
            assert code == 0
            blobs.append((out_dir / "report.json").read_bytes())
        assert blobs[0] == blobs[1]

    def test_stage_filter(self, capsys, tmp_path, in_repo_root):
        out_dir = tmp_path / "rep"
        code, out, _ = run_cli(
            capsys,
            "eval", "--config", "fixtures/eval_toy.conf",
            "--stages", "planning", "--out", str(out_dir),
            "fixtures/eval_toy.jsonl",
        )
        assert code == 0
        assert "TUA" in out
        assert "BLEU" not in out
        assert (out_dir / "planning.png").exists()
        assert not (out_dir / "generation.png").exists()
        assert "(1 figure(s))" in out

    def test_unknown_stage_exits_one(self, capsys, tmp_path, in_repo_root):
        code, _, err = run_cli(
            capsys,
            "eval", "--config", "fixtures/eval_toy.conf",
            "--stages", "juggling", "--out", str(tmp_path / "rep"),
            "fixtures/eval_toy.jsonl",
        )
        assert code == 1
        assert "unknown stages" in err


class TestGraphCommands:
    def test_stats_match_manifest(self, capsys, fixtures_dir):
        manifest = json.loads((fixtures_dir / "graph50_manifest.json").read_text())
        code, out, _ = run_cli(
            capsys, "graph", "stats", "--graph", str(fixtures_dir / "graph50.jsonl")
        )
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == f"nodes: {manifest['nodes']}"
        assert lines[1] == f"edges: {manifest['edges']}"
        assert lines[2] == "dim: 64"
        for kind, count in manifest["kinds"].items():
            assert f"kind {kind}: {count}" in lines
        for label, count in manifest["labels"].items():
            assert f"label {label}: {count}" in lines

    def test_stats_missing_file_is_empty_graph(self, capsys, tmp_path):
        code, out, _ = run_cli(
            capsys, "graph", "stats", "--graph", str(tmp_path / "ghost.jsonl")
        )
        assert code == 0
        assert out == "nodes: 0\nedges: 0\ndim: -\n"

    def test_export_is_byte_faithful(self, capsys, tmp_path, fixtures_dir):
        dest = tmp_path / "out.jsonl"
        code, out, _ = run_cli(
            capsys,
            "graph", "export", "--graph", str(fixtures_dir / "graph50.jsonl"),
            str(dest),
        )
        assert code == 0
        assert out == "exported 50 nodes, 67 edges\n"
        assert dest.read_bytes() == (fixtures_dir / "graph50.jsonl").read_bytes()

    def test_import_round_trip(self, capsys, tmp_path, fixtures_dir):
        dest = tmp_path / "round.jsonl"
        code, out, _ = run_cli(
            capsys,
            "graph", "import", "--graph", str(dest),
            str(fixtures_dir / "graph50.jsonl"),
        )
        assert code == 0
        assert out == "imported 50 nodes, 67 edges\n"
        assert dest.read_bytes() == (fixtures_dir / "graph50.jsonl").read_bytes()

    def test_stats_leaves_graph_untouched(self, capsys, tmp_path, fixtures_dir):
        graph_copy = tmp_path / "kb.jsonl"
        shutil.copyfile(fixtures_dir / "graph50.jsonl", graph_copy)
        before = graph_copy.read_bytes()
        code, _, _ = run_cli(capsys, "graph", "stats", "--graph", str(graph_copy))
        assert code == 0
        assert graph_copy.read_bytes() == before


class TestDedup:
    def test_merges_planted_duplicates(self, capsys, dup_graph):
        code, out, _ = run_cli(capsys, "dedup", "--graph", str(dup_graph))
        assert code == 0
        assert out == "groups merged: 1\nnodes removed: 1\n"

    def test_second_pass_finds_nothing(self, capsys, dup_graph):
        run_cli(capsys, "dedup", "--graph", str(dup_graph))
        code, out, _ = run_cli(capsys, "dedup", "--graph", str(dup_graph))
        assert code == 0
        assert out == "groups merged: 0\nnodes removed: 0\n"

    def test_strict_name_threshold_blocks_merge(self, capsys, dup_graph):
        # "pump" vs "pumps" is one edit; --lev 0 demands identical names
        code, out, _ = run_cli(
            capsys, "dedup", "--graph", str(dup_graph), "--lev", "0"
        )
        assert code == 0
        assert out == "groups merged: 0\nnodes removed: 0\n"

    def test_merge_shrinks_graph_file(self, capsys, dup_graph):
        code, _, _ = run_cli(capsys, "dedup", "--graph", str(dup_graph))
        assert code == 0
        code, out, _ = run_cli(capsys, "graph", "stats", "--graph", str(dup_graph))
        assert code == 0
        assert out.startswith("nodes: 2\n")
