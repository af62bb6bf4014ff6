#!/usr/bin/env python3
"""Regenerate the committed fixtures under fixtures/.

Everything here is deterministic; rerunning must reproduce the same bytes.
Run from the repository root: python3 scripts/gen_fixtures.py
"""

from __future__ import annotations

import json
import os
import random
import sys
from typing import Dict, List, Optional, Tuple

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from grasolve.embeddings import HashingEmbedder
from grasolve.graph import Edge, EdgeLabel, Node, NodeKind, PropertyGraph, export_graph
from grasolve.ingest import chunk_text
from grasolve.mathexpr import evaluate_arithmetic, format_number

ROOT = os.path.normpath(os.path.join(os.path.dirname(__file__), ".."))
FIXTURES = os.path.join(ROOT, "fixtures")


def write_jsonl(path: str, rows: List[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# --------------------------------------------------------------------------
# Worked two-step session (pressure conversion + ideal gas law)
# --------------------------------------------------------------------------

WORKED_TASK = (
    "Calculate the volume occupied by 88 lb of CO2 at 15 degrees C "
    "and a pressure of 32.2 ft of water."
)

WORKED_FINAL = (
    "The volume occupied by 88 lb of CO2 at 15 degrees C and a pressure "
    "of 32.2 ft of water is 49.8 liters."
)

WORKED_CODE_1 = """# Constants
ft_to_atm = 0.0294
pressure_ft = 32.2
# Convert pressure
pressure_atm = pressure_ft * ft_to_atm
print(pressure_atm)"""

WORKED_CODE_2 = """# Constants
R = 0.0821  # L-atm/(K-mol)
T = 288.15  # K
n = 2  # moles
P = 0.94668  # atm
# Ideal Gas Law
V = (n * R * T) / P
print(V)"""


def gen_worked_session() -> None:
    rows = [
        {"tag": "action", "index": 0,
         "response": "TOOL: code\nSTEP: Convert pressure from ft of water to atm"},
        {"tag": "action", "index": 1,
         "response": "TOOL: code\nSTEP: Use the Ideal Gas Law to calculate the volume"},
        {"tag": "action", "index": 2, "response": f"FINAL: {WORKED_FINAL}"},
        {"tag": "code", "index": 0, "response": WORKED_CODE_1},
        {"tag": "code", "index": 1, "response": WORKED_CODE_2},
    ]
    write_jsonl(os.path.join(FIXTURES, "worked_session_script.jsonl"), rows)
    write_text(
        os.path.join(FIXTURES, "worked_session.conf"),
        "# Worked two-step session replayed against the local sandbox.\n"
        "backend.action = scripted:fixtures/worked_session_script.jsonl\n"
        "backend.code = scripted:fixtures/worked_session_script.jsonl\n"
        "max_steps = 10\n"
        "max_repairs = 3\n",
    )


# --------------------------------------------------------------------------
# Ingestion sample: one document plus a triple fixture keyed by chunk text
# --------------------------------------------------------------------------

SAMPLE_TEXT = (
    "A heat exchanger transfers thermal energy between two process streams "
    "without mixing them. The shell and tube design routes one stream through "
    "a bundle of tubes while the second stream flows across the bundle inside "
    "the shell. Plate exchangers trade pressure rating for compactness."
)


def gen_sample_doc() -> None:
    doc = {
        "doc_id": "demo-doc",
        "title": "Heat Exchanger Basics",
        "blocks": [
            {"type": "text", "page": 1, "text": SAMPLE_TEXT},
            {
                "type": "table",
                "page": 2,
                "title": "Typical overall coefficients",
                "columns": ["service", "U (W/m2K)"],
                "rows": [
                    ["water to water", "900"],
                    ["gas to gas", "30"],
                ],
            },
            {
                "type": "image",
                "page": 2,
                "path": "figures/fig-1.png",
                "caption": "Shell and tube exchanger with two tube passes",
            },
        ],
    }
    with open(os.path.join(FIXTURES, "sample_doc.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")

    # key triples by the exact chunk text the default window produces
    chunks = chunk_text(SAMPLE_TEXT, window=128, stride=64)
    assert len(chunks) == 1, "sample text must fit one default window"
    triples = {
        chunks[0].text: [
            "heat exchanger --- transfers --- thermal energy",
            "shell and tube design --- is a kind of --- heat exchanger",
            "plate exchanger --- trades --- pressure rating",
        ]
    }
    with open(os.path.join(FIXTURES, "sample_triples.json"), "w", encoding="utf-8") as fh:
        json.dump(triples, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------------------
# Search corpus
# --------------------------------------------------------------------------

def gen_search_corpus() -> None:
    corpus = {
        "heat exchanger types": [
            {"id": "doc1", "text": "Shell and tube exchangers dominate industrial service."},
            {"id": "doc2", "text": "Plate exchangers suit clean low-pressure duties."},
        ],
        "reflux ratio rule of thumb": [
            {"id": "doc3", "text": "Operating reflux is commonly 1.2 to 1.5 times the minimum."},
        ],
        "ideal gas constant value": [
            {"id": "doc4", "text": "R equals 0.0821 liter-atm per mol-kelvin."},
        ],
    }
    with open(os.path.join(FIXTURES, "search_corpus.json"), "w", encoding="utf-8") as fh:
        json.dump(corpus, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------------------
# 25-record toy evaluation dataset with an aligned backend script
# --------------------------------------------------------------------------

class ToyBuilder:
    def __init__(self) -> None:
        self.records: List[dict] = []
        self.script: List[dict] = []
        self._counters: Dict[str, int] = {}

    def say(self, tag: str, response: str) -> None:
        idx = self._counters.get(tag, 0)
        self._counters[tag] = idx + 1
        self.script.append({"tag": tag, "index": idx, "response": response})

    def record(self, **fields) -> None:
        clean = {k: v for k, v in fields.items() if v is not None}
        self.records.append(clean)


def gen_eval_toy() -> None:
    b = ToyBuilder()

    math_cases = [
        ("3 + 4 * 2", None),
        ("(12 - 5) * 3", None),
        ("100 / 8", None),
        ("2 ^ 6", None),
        ("45 - 17", None),
        ("8 * 5", "pe-miss"),
        ("7 + 7 + 7", "plan-miss"),
        ("90 / 4", "em-miss"),
        ("(3 + 5) * (2 + 1)", "pe-pad"),
    ]
    for i, (expr, quirk) in enumerate(math_cases, start=1):
        value = format_number(evaluate_arithmetic(expr))
        final = f"The value is {value}."
        b.say("action", f"TOOL: math\nSTEP: {expr}")
        b.say("action", f"FINAL: {final}")
        gold_expr = expr
        if quirk == "pe-miss":
            gold_expr = f"{expr} - 0"
        elif quirk == "pe-pad":
            gold_expr = f"  {expr} "
        b.record(
            query=f"Compute the value of {expr}.",
            requires_tool=True,
            gold_plan=["math", "math"] if quirk == "plan-miss" else ["math"],
            gold_tools=["math"],
            gold_params={"math.expression": gold_expr},
            graded_relevance=[3.0] if i == 1 else None,
            reference_answer=(
                f"The value is roughly {value}." if quirk == "em-miss" else final
            ),
        )

    code_cases = [
        ("print(6 * 7)", "42", "fenced"),
        ("print(19 + 23)", "42", None),
        ("total = 0\nfor i in range(5):\n    total += i\nprint(total)", "10", None),
        ("print(9 - 2)", "7", "gold-math"),
    ]
    for snippet, out, quirk in code_cases:
        final = f"The program prints {out}."
        b.say("action", "TOOL: code\nSTEP: Write a short program for the question")
        reply = f"```python\n{snippet}\n```" if quirk == "fenced" else snippet
        b.say("code", reply)
        b.say("action", f"FINAL: {final}")
        if quirk == "gold-math":
            gold_plan = ["math"]
            gold_tools = ["math"]
            gold_params = {"math.expression": "9 - 2"}
        else:
            gold_plan = ["code"]
            gold_tools = ["code"]
            gold_params = {"code.snippet": snippet}
        b.record(
            query=f"What does this program print: {snippet.splitlines()[-1]}?",
            requires_tool=True,
            gold_plan=gold_plan,
            gold_tools=gold_tools,
            gold_params=gold_params,
            reference_answer=final,
        )

    none_cases = [
        ("What does NPSH stand for?", "Net positive suction head."),
        ("What is the boiling point of water at 1 atm in Celsius?", "100 degrees Celsius."),
        ("Which law relates pressure and volume at fixed temperature?", "Boyle's law."),
        ("What phase change is condensation?", "Vapor turning into liquid."),
        ("Name the standard reference pressure in atmospheres.", "One atmosphere."),
        ("What does a reboiler attach to?", "The bottom of a distillation column."),
    ]
    for i, (query, answer) in enumerate(none_cases, start=1):
        b.say("action", "TOOL: none\nSTEP: Answer directly from memory")
        b.say("action", f"FINAL: {answer}")
        quirk_tool_miss = i == 5
        b.record(
            query=query,
            requires_tool=quirk_tool_miss,
            gold_plan=["search"] if quirk_tool_miss else ["none"],
            gold_tools=["search"] if quirk_tool_miss else None,
            reference_answer=None if i == 6 else answer,
        )

    search_cases = [
        ("heat exchanger types",
         "Shell and tube exchangers dominate industrial service.", [2.0]),
        ("reflux ratio rule of thumb",
         "Operating reflux is commonly 1.2 to 1.5 times the minimum.", None),
    ]
    for key, answer, graded in search_cases:
        b.say("action", f"TOOL: search\nSTEP: {key}")
        b.say("action", f"FINAL: {answer}")
        b.record(
            query=f"Look up: {key}.",
            requires_tool=True,
            gold_plan=["search"],
            gold_tools=["search"],
            gold_params={"search.query": key},
            graded_relevance=graded,
            reference_answer=answer,
        )

    two_step = [
        ("40 * 6", "240", "There are 240 widgets in total."),
        ("150 / 3", "50", "Each crate holds 50 parts."),
    ]
    for expr, value, final in two_step:
        b.say("action", f"TOOL: math\nSTEP: {expr}")
        b.say("action", f"TOOL: none\nSTEP: Confirm the count is {value}")
        b.say("action", f"FINAL: {final}")
        b.record(
            query=f"Work out {expr} and state the total.",
            requires_tool=True,
            gold_plan=["math", "none"],
            gold_tools=["math"],
            gold_params={"math.expression": expr},
            reference_answer=final,
        )

    code_math = [
        ("print(12 * 12)", "144 + 56", "200", "The combined total is 200."),
        ("print(2 ** 8)", "256 / 2", "128", "The result is 128."),
    ]
    for snippet, expr, value, final in code_math:
        b.say("action", "TOOL: code\nSTEP: Compute the base quantity with a program")
        b.say("code", snippet)
        b.say("action", f"TOOL: math\nSTEP: {expr}")
        b.say("action", f"FINAL: {final}")
        b.record(
            query=f"Combine a computed base with the adjustment {expr}.",
            requires_tool=True,
            gold_plan=["code", "math"],
            gold_tools=["code", "math"],
            gold_params={"code.snippet": snippet, "math.expression": expr},
            reference_answer=final,
        )

    assert len(b.records) == 25, len(b.records)
    write_jsonl(os.path.join(FIXTURES, "eval_toy.jsonl"), b.records)
    write_jsonl(os.path.join(FIXTURES, "eval_toy_script.jsonl"), b.script)
    write_text(
        os.path.join(FIXTURES, "eval_toy.conf"),
        "# Scripted engine for the 25-record toy benchmark.\n"
        "backend.action = scripted:fixtures/eval_toy_script.jsonl\n"
        "backend.code = scripted:fixtures/eval_toy_script.jsonl\n"
        "search.corpus = fixtures/search_corpus.json\n"
        "max_steps = 6\n"
        "max_repairs = 3\n",
    )


# --------------------------------------------------------------------------
# 50-node graph fixture with a count manifest
# --------------------------------------------------------------------------

def gen_graph50() -> None:
    rng = random.Random(50)
    embedder = HashingEmbedder(dim=64)
    g = PropertyGraph()
    words = ["pump", "valve", "reactor", "column", "feed", "steam", "shell", "tube"]

    for i in range(10):
        text = " ".join(rng.choices(words, k=6))
        g.add_node(Node(f"doc/c{i}", NodeKind.CHUNK, {"text": text}, embedder.embed(text)))
    for i in range(30):
        name = f"{words[i % len(words)]} unit {i}"
        g.add_node(Node(f"ent:{name}", NodeKind.ENTITY, {"name": name}, embedder.embed(name)))
    g.add_node(Node("tbl:duty", NodeKind.TABLE, {"title": "duty"}, embedder.embed("duty")))
    for j in range(4):
        g.add_node(Node(f"tbl:duty/r{j}", NodeKind.ROW, {"service": f"s{j}"}))
        g.add_edge(Edge(f"tbl:duty/r{j}", "tbl:duty", EdgeLabel.BELONGS))
    for i in range(3):
        cap = f"diagram {i}"
        g.add_node(Node(f"img:{i}", NodeKind.IMAGE, {"summary": cap}, embedder.embed(cap)))
    g.add_edge(Edge("img:0", "img:1", EdgeLabel.VISUALLY_SIMILAR))
    g.add_edge(Edge("img:1", "img:0", EdgeLabel.VISUALLY_SIMILAR))
    g.add_node(Node("code:mod", NodeKind.CODE_UNIT, {"name": "<module>", "scope": "module"}))
    g.add_node(Node("code:mod/run", NodeKind.CODE_UNIT, {"name": "run", "scope": "function"}))
    g.add_edge(Edge("code:mod", "code:mod/run", EdgeLabel.PARENT_OF))

    entities = sorted(n.id for n in g.nodes(NodeKind.ENTITY))
    chunks = sorted(n.id for n in g.nodes(NodeKind.CHUNK))
    for i, ent in enumerate(entities):
        other = entities[(i * 7 + 3) % len(entities)]
        if other != ent:
            g.add_edge(Edge(ent, other, EdgeLabel.RELATION, "feeds"))
        g.add_edge(Edge(ent, chunks[i % len(chunks)], EdgeLabel.MENTIONS))

    assert g.node_count() == 50, g.node_count()
    export_graph(g, os.path.join(FIXTURES, "graph50.jsonl"))
    manifest = {
        "nodes": g.node_count(),
        "edges": g.edge_count(),
        "kinds": {k.value: len(list(g.nodes(k))) for k in NodeKind},
        "labels": {},
    }
    label_counts: Dict[str, int] = {}
    for edge in g.edges():
        label_counts[edge.label.value] = label_counts.get(edge.label.value, 0) + 1
    manifest["labels"] = dict(sorted(label_counts.items()))
    with open(os.path.join(FIXTURES, "graph50_manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def main() -> None:
    os.makedirs(FIXTURES, exist_ok=True)
    gen_worked_session()
    gen_sample_doc()
    gen_search_corpus()
    gen_eval_toy()
    gen_graph50()
    print(f"fixtures written to {FIXTURES}")


if __name__ == "__main__":
    main()
