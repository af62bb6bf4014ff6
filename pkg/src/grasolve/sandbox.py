"""Child-process execution of generated code snippets.

Snippets run under a configurable interpreter in a fresh temporary
directory with a minimal environment and a hard wall-clock timeout. The
process is killed (and waited for) when the timeout expires, so no child
outlives the deadline by more than scheduling noise. Network access is
simply not provided; OS-level jailing is out of scope.
"""

from __future__ import annotations

import logging
import subprocess
import sys
import tempfile
import threading
import time
from dataclasses import dataclass, field
from typing import List, Optional

from .errors import InvalidParams

logger = logging.getLogger(__name__)


@dataclass
class SandboxConfig:
    interpreter: List[str] = field(default_factory=lambda: [sys.executable])
    timeout_s: float = 10.0
    max_concurrent: int = 4

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise InvalidParams(f"timeout_s must be positive, got {self.timeout_s}")
        if self.max_concurrent < 1:
            raise InvalidParams(f"max_concurrent must be >= 1, got {self.max_concurrent}")
        # One gate per config object; engines share a config instance.
        self._gate = threading.BoundedSemaphore(self.max_concurrent)


@dataclass
class SandboxResult:
    stdout: str
    stderr: str
    exit_code: int
    timed_out: bool
    duration_s: float


def run_snippet(snippet: str, cfg: SandboxConfig) -> SandboxResult:
    """Execute `snippet` as a file under `cfg.interpreter`.

    Runs in a throwaway working directory with a near-empty environment.
    Returns captured output, the exit code (-1 when killed on timeout),
    and the wall-clock duration.
    """
    with cfg._gate:
        with tempfile.TemporaryDirectory(prefix="grasolve-run-") as workdir:
            path = f"{workdir}/snippet.py"
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(snippet)
            env = {
                "PATH": "/usr/bin:/bin",
                "HOME": workdir,
                "LANG": "C.UTF-8",
                "PYTHONIOENCODING": "utf-8",
                "PYTHONDONTWRITEBYTECODE": "1",
            }
            started = time.monotonic()
            try:
                proc = subprocess.run(
                    [*cfg.interpreter, path],
                    cwd=workdir,
                    env=env,
                    capture_output=True,
                    text=True,
                    timeout=cfg.timeout_s,
                )
                return SandboxResult(
                    stdout=proc.stdout,
                    stderr=proc.stderr,
                    exit_code=proc.returncode,
                    timed_out=False,
                    duration_s=time.monotonic() - started,
                )
            except subprocess.TimeoutExpired as exc:
                # subprocess.run kills and reaps the child before re-raising.
                out = exc.stdout or b""
                err = exc.stderr or b""
                return SandboxResult(
                    stdout=out.decode("utf-8", "replace") if isinstance(out, bytes) else out,
                    stderr=err.decode("utf-8", "replace") if isinstance(err, bytes) else err,
                    exit_code=-1,
                    timed_out=True,
                    duration_s=time.monotonic() - started,
                )
