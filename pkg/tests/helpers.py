"""Shared test utilities: random graph builders, engine factories, and a
tiny loopback HTTP server for exercising the remote clients."""

from __future__ import annotations

import http.server
import json
import random
import threading
from contextlib import contextmanager
from typing import Callable, Dict, List, Optional, Tuple

from grasolve.backends import ScriptedBackend
from grasolve.graph import Edge, EdgeLabel, Node, NodeKind, PropertyGraph
from grasolve.orchestrator import Engine
from grasolve.sandbox import SandboxConfig
from grasolve.tools import build_default_registry

WORDS = [
    "pump", "valve", "reactor", "column", "tray", "feed", "steam", "duty",
    "shell", "tube", "flux", "heat", "mass", "flow", "stage", "reflux",
]


def rand_vec(rng: random.Random, dim: int) -> List[float]:
    return [rng.uniform(-1.0, 1.0) for _ in range(dim)]


def make_random_graph(rng: random.Random, n_entities: int = 12, dim: int = 6) -> PropertyGraph:
    """A valid random graph touching every node kind and edge label."""
    g = PropertyGraph()
    n_chunks = max(1, n_entities // 3)
    for i in range(n_chunks):
        g.add_node(
            Node(
                f"doc/c{i}",
                NodeKind.CHUNK,
                {"text": " ".join(rng.choices(WORDS, k=rng.randint(3, 10)))},
                rand_vec(rng, dim),
            )
        )
    for i in range(n_entities):
        name = f"{rng.choice(WORDS)} {i}"
        g.add_node(
            Node(f"ent:{name}", NodeKind.ENTITY, {"name": name}, rand_vec(rng, dim))
        )
    entities = [n.id for n in g.nodes(NodeKind.ENTITY)]
    chunks = [n.id for n in g.nodes(NodeKind.CHUNK)]
    for _ in range(n_entities * 2):
        a, b = rng.choice(entities), rng.choice(entities)
        if a != b:
            g.add_edge(Edge(a, b, EdgeLabel.RELATION, rng.choice(["feeds", "cools", "drives"])))
    for ent in entities:
        if rng.random() < 0.8:
            g.add_edge(Edge(ent, rng.choice(chunks), EdgeLabel.MENTIONS))
    # one table with rows
    g.add_node(Node("tbl", NodeKind.TABLE, {"title": "t"}, rand_vec(rng, dim)))
    for j in range(rng.randint(1, 3)):
        g.add_node(Node(f"tbl/r{j}", NodeKind.ROW, {"col": j}))
        g.add_edge(Edge(f"tbl/r{j}", "tbl", EdgeLabel.BELONGS))
    # a couple of images
    g.add_node(Node("img:a", NodeKind.IMAGE, {"summary": "a"}, rand_vec(rng, dim)))
    g.add_node(Node("img:b", NodeKind.IMAGE, {"summary": "b"}, rand_vec(rng, dim)))
    g.add_edge(Edge("img:a", "img:b", EdgeLabel.VISUALLY_SIMILAR))
    g.add_edge(Edge("img:b", "img:a", EdgeLabel.VISUALLY_SIMILAR))
    # a small code-unit tree
    g.add_node(Node("code:m", NodeKind.CODE_UNIT, {"name": "<module>"}))
    g.add_node(Node("code:m/f", NodeKind.CODE_UNIT, {"name": "f"}))
    g.add_edge(Edge("code:m", "code:m/f", EdgeLabel.PARENT_OF))
    return g


def make_engine(script: Dict[Tuple[str, int], str], **overrides) -> Engine:
    """Engine with scripted backends for every tag present in the script."""
    tags = sorted({tag for tag, _ in script})
    kwargs = dict(
        registry=build_default_registry(),
        backends={tag: ScriptedBackend(script, tag) for tag in tags},
        sandbox=SandboxConfig(timeout_s=20.0),
    )
    kwargs.update(overrides)
    return Engine(**kwargs)


def total_calls(engine: Engine) -> int:
    return sum(b.calls for b in engine.backends.values())


class _Handler(http.server.BaseHTTPRequestHandler):
    respond: Callable = None  # set per server

    def do_GET(self):
        self._serve()

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        self.body = self.rfile.read(length).decode("utf-8") if length else ""
        self._serve()

    def _serve(self):
        status, content_type, payload = type(self).respond(self)
        data = payload.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@contextmanager
def loopback_server(respond: Callable):
    """Serve `respond(handler) -> (status, content_type, body_text)` locally."""
    handler = type("H", (_Handler,), {"respond": staticmethod(respond)})
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}"
    finally:
        server.shutdown()
        thread.join(timeout=5)
        server.server_close()


def json_response(obj) -> Tuple[int, str, str]:
    return 200, "application/json", json.dumps(obj)
