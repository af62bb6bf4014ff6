"""Command-line entry point wiring config, graph, engine, and evaluator.

Exit codes: 0 on success, 1 on a domain error (printed to stderr), 2 on a
usage error (argparse synopsis on stderr). Only `ingest`, `dedup`, and
`graph import` write the configured graph file; every other command leaves
it untouched.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional

from .config import (
    EngineConfig,
    build_embedder,
    build_engine,
    build_extractor,
    load_config,
    load_graph,
    save_graph,
)
from .dedup import dedup_entities
from .errors import GrasolveError
from .evalrun import STAGES, load_dataset, run_eval
from .graph import export_graph, import_graph
from .ingest import ingest_document, parse_document
from .orchestrator import Trajectory, export_trajectory
from .report import format_table, render_figures, write_csv, write_json
from .retrieval import assemble_context, retrieve


def _config_for(args) -> EngineConfig:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "graph", None):
        cfg.graph_path = args.graph
    if getattr(args, "window", None) is not None:
        cfg.window = args.window
    if getattr(args, "stride", None) is not None:
        cfg.stride = args.stride
    if getattr(args, "k", None) is not None:
        cfg.retrieval_k = args.k
    if getattr(args, "budget", None) is not None:
        cfg.context_budget = args.budget
    if getattr(args, "max_steps", None) is not None:
        cfg.max_steps = args.max_steps
    if getattr(args, "max_repairs", None) is not None:
        cfg.max_repairs = args.max_repairs
    return cfg


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def _cmd_ingest(args) -> int:
    cfg = _config_for(args)
    graph = load_graph(cfg)
    doc = parse_document(args.document)
    embedder = build_embedder(cfg)
    backends = {}
    if cfg.triples_path is None and "action" in cfg.backend_specs:
        from .config import _build_backend

        backends["action"] = _build_backend(cfg, "action", cfg.backend_specs["action"], os.environ)
    extractor = build_extractor(cfg, backends)
    report = ingest_document(
        graph, doc, embedder, extractor, window=cfg.window, stride=cfg.stride
    )
    save_graph(cfg, graph)
    print(f"chunks: {report.chunks}")
    print(f"entities: {report.entities}")
    print(f"triples: {report.triples}")
    print(f"skipped: {report.skipped}")
    return 0


def _indent_block(text: str) -> str:
    lines = text.splitlines() or [""]
    return ("\n" + " " * 4).join(lines)


def _print_trajectory(trajectory: Trajectory) -> None:
    print(f"Task: {trajectory.x}")
    for step in trajectory.steps:
        print(f"Step {step.step}:")
        print(f"  Tool: {step.tool or 'none'}")
        if step.input:
            print(f"  Input: {_indent_block(step.input)}")
        print(f"  Output: {_indent_block(step.output.rstrip())}")
        print(f"  Result: {step.result}")
    if trajectory.final_answer is not None:
        print(f"Final Answer: {trajectory.final_answer}")
    print(f"Status: {trajectory.status.value}")


def _cmd_solve(args) -> int:
    cfg = _config_for(args)
    engine = build_engine(cfg)
    trajectory = engine.solve(args.question)
    _print_trajectory(trajectory)
    if args.trajectory:
        export_trajectory(trajectory, args.trajectory)
    return 0


def _cmd_query(args) -> int:
    cfg = _config_for(args)
    graph = load_graph(cfg)
    embedder = build_embedder(cfg)
    ctx = retrieve(graph, args.question, cfg.retrieval_k, embedder)
    print(assemble_context(ctx, cfg.context_budget))
    return 0


def _cmd_eval(args) -> int:
    cfg = _config_for(args)
    engine = build_engine(cfg)
    records = load_dataset(args.dataset)
    stages = None
    if args.stages:
        stages = [s.strip() for s in args.stages.split(",") if s.strip()]
    report = run_eval(
        engine,
        records,
        stages=stages,
        k=args.k,
        config={"dataset": os.path.basename(args.dataset)},
    )
    os.makedirs(args.out, exist_ok=True)
    write_json(report, os.path.join(args.out, "report.json"))
    write_csv(report, os.path.join(args.out, "report.csv"))
    figures = render_figures(report, args.out)
    print(format_table(report))
    print(f"report written to {args.out} ({len(figures)} figure(s))")
    return 0


def _cmd_graph_export(args) -> int:
    cfg = _config_for(args)
    graph = load_graph(cfg)
    export_graph(graph, args.out)
    print(f"exported {graph.node_count()} nodes, {graph.edge_count()} edges")
    return 0


def _cmd_graph_import(args) -> int:
    cfg = _config_for(args)
    graph = import_graph(args.source)
    save_graph(cfg, graph)
    print(f"imported {graph.node_count()} nodes, {graph.edge_count()} edges")
    return 0


def _cmd_graph_stats(args) -> int:
    cfg = _config_for(args)
    stats = load_graph(cfg).stats()
    print(f"nodes: {stats['nodes']}")
    print(f"edges: {stats['edges']}")
    print(f"dim: {stats['dim'] if stats['dim'] is not None else '-'}")
    for kind, count in stats["by_kind"].items():
        print(f"kind {kind}: {count}")
    for label, count in stats["by_label"].items():
        print(f"label {label}: {count}")
    return 0


def _cmd_dedup(args) -> int:
    cfg = _config_for(args)
    graph = load_graph(cfg)
    report = dedup_entities(graph, args.cos, args.lev)
    save_graph(cfg, graph)
    print(f"groups merged: {report.groups_merged}")
    print(f"nodes removed: {report.nodes_removed}")
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grasolve",
        description="Graph-grounded stepwise task solver and evaluator.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a key=value config file")
    common.add_argument("--graph", help="graph JSONL path (overrides config)")

    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="parse a document into the graph")
    p.add_argument("document", help="document JSON file")
    p.add_argument("--window", type=int, help="chunk window in tokens")
    p.add_argument("--stride", type=int, help="chunk stride in tokens")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("solve", parents=[common], help="run the solve loop on a question")
    p.add_argument("question")
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--max-repairs", dest="max_repairs", type=int)
    p.add_argument("--trajectory", help="append the trajectory to this JSONL file")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("query", parents=[common], help="print retrieved context for a query")
    p.add_argument("question")
    p.add_argument("--k", type=int, help="number of entity seeds")
    p.add_argument("--budget", type=int, help="context token budget")
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("eval", parents=[common], help="run a labeled dataset and write a report")
    p.add_argument("dataset", help="dataset JSONL file")
    p.add_argument("--stages", help=f"comma-separated subset of {','.join(STAGES)}")
    p.add_argument("--k", type=int, default=3, help="cutoff for selection metrics")
    p.add_argument("--out", default="eval-report", help="output directory")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("graph", help="graph file utilities")
    gsub = p.add_subparsers(dest="graph_command", metavar="action", required=True)
    g = gsub.add_parser("export", parents=[common], help="write the graph to a new file")
    g.add_argument("out")
    g.set_defaults(func=_cmd_graph_export)
    g = gsub.add_parser("import", parents=[common], help="replace the graph from a file")
    g.add_argument("source")
    g.set_defaults(func=_cmd_graph_import)
    g = gsub.add_parser("stats", parents=[common], help="print node and edge counts")
    g.set_defaults(func=_cmd_graph_stats)

    p = sub.add_parser("dedup", parents=[common], help="merge near-duplicate entities")
    p.add_argument("--cos", type=float, default=0.9, help="cosine threshold")
    p.add_argument("--lev", type=int, default=2, help="edit distance threshold")
    p.set_defaults(func=_cmd_dedup)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code is None else int(exc.code)
    try:
        return args.func(args)
    except GrasolveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
