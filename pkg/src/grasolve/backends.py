"""Model backends: scripted deterministic replay and remote chat completions.

Every generator role in the pipeline (action planner, per-tool expert,
triple extractor) talks to a :class:`ModelBackend` through one call shape:
``complete(instruction, payload) -> text``. The scripted backend replays a
recorded session from a JSONL file keyed by (tag, call index), which is how
the whole system runs deterministically in tests and offline demos.
"""

from __future__ import annotations

import json
import logging
import os
from typing import Dict, List, Optional, Protocol, Tuple, Union

import requests

from .errors import ParseError, RemoteError, ScriptExhausted

logger = logging.getLogger(__name__)


class ModelBackend(Protocol):
    def complete(self, instruction: str, payload: str) -> str:
        ...


def backend_complete(backend: ModelBackend, instruction: str, payload: str) -> str:
    """Uniform carrier for every prompt-style invocation."""
    return backend.complete(instruction, payload)


def load_script(source) -> Dict[Tuple[str, int], str]:
    """Load a replay file: JSONL of {"tag": str, "index": int, "response": str}.

    Returns a map from (tag, index) to response text. Raises ParseError
    with the 1-based line number on malformed lines or duplicate slots.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    elif hasattr(source, "read"):
        lines = source.readlines()
    else:
        lines = list(source)
    script: Dict[Tuple[str, int], str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
        if not isinstance(obj, dict):
            raise ParseError("script entry must be an object", line=lineno)
        tag = obj.get("tag")
        index = obj.get("index")
        response = obj.get("response")
        if not isinstance(tag, str) or not tag:
            raise ParseError("script entry needs a non-empty string 'tag'", line=lineno)
        if not isinstance(index, int) or isinstance(index, bool) or index < 0:
            raise ParseError("script entry needs a non-negative integer 'index'", line=lineno)
        if not isinstance(response, str):
            raise ParseError("script entry needs a string 'response'", line=lineno)
        if (tag, index) in script:
            raise ParseError(f"duplicate script slot ({tag!r}, {index})", line=lineno)
        script[(tag, index)] = response
    return script


class ScriptedBackend:
    """Replays recorded responses for one instruction tag.

    Each backend instance owns a call counter; the n-th `complete` call
    returns the script entry (tag, n). Entries may come from a shared
    script map, so several roles can replay one session file. Raises
    ScriptExhausted when no entry exists for the next slot.
    """

    def __init__(self, script: Union[Dict[Tuple[str, int], str], str, os.PathLike], tag: str):
        if not isinstance(script, dict):
            script = load_script(script)
        self._script = script
        self.tag = tag
        self.calls = 0

    def complete(self, instruction: str, payload: str) -> str:
        slot = (self.tag, self.calls)
        self.calls += 1
        try:
            return self._script[slot]
        except KeyError:
            raise ScriptExhausted(
                f"no scripted response for tag {self.tag!r} at call index {slot[1]}"
            ) from None


class RemoteBackend:
    """Chat-completions HTTP backend.

    Sends `instruction` as the system message and `payload` as the user
    message; returns the first choice's text. The bearer token, when set,
    should come from the environment rather than from config files.
    """

    def __init__(
        self,
        endpoint: str,
        model: str = "",
        token: Optional[str] = None,
        timeout: float = 60.0,
    ):
        self.endpoint = endpoint
        self.model = model
        self._token = token
        self.timeout = timeout
        self.calls = 0

    def complete(self, instruction: str, payload: str) -> str:
        self.calls += 1
        headers = {"Content-Type": "application/json"}
        if self._token:
            headers["Authorization"] = f"Bearer {self._token}"
        messages: List[Dict[str, str]] = [
            {"role": "system", "content": instruction},
            {"role": "user", "content": payload},
        ]
        body = {"model": self.model, "messages": messages}
        try:
            resp = requests.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
        except requests.RequestException as exc:
            raise RemoteError(f"request to {self.endpoint} failed: {exc}") from exc
        if resp.status_code != 200:
            raise RemoteError(
                f"backend returned HTTP {resp.status_code}: {resp.text[:200]}",
                status=resp.status_code,
            )
        try:
            data = resp.json()
            choice = data["choices"][0]
            if "message" in choice:
                text = choice["message"]["content"]
            else:
                text = choice["text"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise RemoteError(f"malformed completion response: {resp.text[:200]}") from exc
        if not isinstance(text, str):
            raise RemoteError("completion content is not a string")
        return text
