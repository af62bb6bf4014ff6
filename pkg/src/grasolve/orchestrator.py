"""Stepwise solve loop: plan, execute, reflect, revise.

An action generator proposes one step at a time over a reply grammar
(`TOOL:`/`STEP:` or `FINAL:`); each step is dispatched to a tool expert and
its outcome is reformulated into the running history. When a step fails,
recovery runs in two phases: the action generator identifies the faulty
step (`FAULT_STEP:`/`FAULT_TOOL:`), then the blamed tool re-runs with a
revision prompt and its new outcome replaces the old one in the history.
Every solve produces a Trajectory suitable for line-oriented export.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from string import Formatter
from typing import Dict, List, Optional, Union

from .backends import ModelBackend, backend_complete
from .embeddings import Embedder
from .errors import (
    BackendFailure,
    GrasolveError,
    IndexOutOfRange,
    InvalidParams,
    ParseError,
    ParseFault,
    RemoteError,
    ScriptExhausted,
    TemplateError,
)
from .graph import PropertyGraph
from .sandbox import SandboxConfig
from .tools import ComputeClient, SearchProvider, ToolOutcome, ToolRegistry

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# Tasks and templates
# --------------------------------------------------------------------------

@dataclass
class Task:
    x: str
    max_steps: int = 10
    max_repairs_per_step: int = 3

    def __post_init__(self):
        if not self.x or not self.x.strip():
            raise InvalidParams("task text must be non-empty")
        if self.max_steps < 1:
            raise InvalidParams(f"max_steps must be >= 1, got {self.max_steps}")
        if self.max_repairs_per_step < 1:
            raise InvalidParams(
                f"max_repairs_per_step must be >= 1, got {self.max_repairs_per_step}"
            )


DEFAULT_ACTION_TEMPLATE = """Plan the next step for the task.
Reply with exactly one of:
TOOL: <tool name>
STEP: <what the tool should do>
or
FINAL: <answer>
Use TOOL: none for a step answered from prior knowledge.

Task: {x}
History: {history}"""

DEFAULT_EXPERT_TEMPLATE = """Carry out this step. Reply with the tool input only.

Task: {x}
History: {history}
Step: {step}"""

DEFAULT_REFLECT_TEMPLATE = """A step failed. Identify the faulty step.
Reply with exactly:
FAULT_STEP: <step number>
FAULT_TOOL: <tool name>

Task: {x}
History: {history}
Failure: {fault}"""

DEFAULT_REVISE_TEMPLATE = """Revise the failed step so it succeeds. Reply with the corrected tool input only.

History: {history}
Step: {step}
Failure: {fault}"""


def _placeholders(template: str, label: str) -> set:
    names = set()
    try:
        for _, fieldname, _, _ in Formatter().parse(template):
            if fieldname is not None:
                names.add(fieldname)
    except ValueError as exc:
        raise TemplateError(f"{label}: {exc}") from exc
    return names


def _check_template(template: str, required: set, allowed: set, label: str) -> None:
    present = _placeholders(template, label)
    missing = required - present
    if missing:
        raise TemplateError(f"{label}: missing placeholders {sorted(missing)}")
    unknown = present - allowed
    if unknown:
        raise TemplateError(f"{label}: unknown placeholders {sorted(unknown)}")


@dataclass
class PromptTemplates:
    """Instruction templates for the planner, experts, reflect, and revise.

    Placeholders: {x} task text, {history} serialized history, {step} step
    description, {fault} failure detail. Each template must mention the
    placeholders its call site fills and may not name others.
    """

    action: str = DEFAULT_ACTION_TEMPLATE
    experts: Dict[str, str] = field(default_factory=dict)
    expert_default: str = DEFAULT_EXPERT_TEMPLATE
    reflect: str = DEFAULT_REFLECT_TEMPLATE
    revise: str = DEFAULT_REVISE_TEMPLATE

    def __post_init__(self):
        _check_template(self.action, {"x", "history"}, {"x", "history"}, "action template")
        expert_req = {"x", "history", "step"}
        _check_template(self.expert_default, expert_req, expert_req, "expert template")
        for tool, template in self.experts.items():
            _check_template(template, expert_req, expert_req, f"expert template for {tool!r}")
        reflect_req = {"x", "history", "fault"}
        _check_template(self.reflect, reflect_req, reflect_req, "reflect template")
        revise_req = {"history", "step", "fault"}
        _check_template(self.revise, revise_req, revise_req, "revise template")

    def expert_for(self, tool: str) -> str:
        return self.experts.get(tool, self.expert_default)


# --------------------------------------------------------------------------
# Actions and reply parsing
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FinalAction:
    answer: str


@dataclass(frozen=True)
class StepAction:
    tool: Optional[str]  # None means answer from prior knowledge
    description: str


Action = Union[FinalAction, StepAction]


def parse_action(text: str, registry: ToolRegistry) -> Action:
    """Parse planner output: `TOOL:`+`STEP:` lines or a `FINAL:` line.

    A FINAL line anywhere wins. The tool name must be registered or the
    literal `none`. Anything else raises ParseFault carrying the raw text.
    """
    tool: Optional[str] = None
    step: Optional[str] = None
    for raw_line in text.splitlines():
        line = raw_line.strip()
        upper = line.upper()
        if upper.startswith("FINAL:"):
            answer = line[len("FINAL:"):].strip()
            if not answer:
                raise ParseFault("FINAL reply with empty answer", raw=text)
            return FinalAction(answer)
        if upper.startswith("TOOL:") and tool is None:
            tool = line[len("TOOL:"):].strip()
        elif upper.startswith("STEP:") and step is None:
            step = line[len("STEP:"):].strip()
    if not tool or not step:
        raise ParseFault("reply matched neither TOOL/STEP nor FINAL", raw=text)
    name = tool.lower()
    if name == "none":
        return StepAction(None, step)
    if name not in registry:
        raise ParseFault(f"unknown tool {tool!r}", raw=text)
    return StepAction(name, step)


@dataclass(frozen=True)
class FaultReport:
    step_index: int
    tool: str


def parse_fault(text: str, history_len: int) -> FaultReport:
    """Parse `FAULT_STEP:`/`FAULT_TOOL:` lines from reflection output.

    The index must name an existing step or the current one
    (history_len + 1); anything else raises IndexOutOfRange.
    """
    index: Optional[int] = None
    tool: Optional[str] = None
    for raw_line in text.splitlines():
        line = raw_line.strip()
        upper = line.upper()
        if upper.startswith("FAULT_STEP:") and index is None:
            value = line[len("FAULT_STEP:"):].strip()
            try:
                index = int(value)
            except ValueError:
                raise ParseFault(f"FAULT_STEP is not an integer: {value!r}", raw=text) from None
        elif upper.startswith("FAULT_TOOL:") and tool is None:
            tool = line[len("FAULT_TOOL:"):].strip()
    if index is None or not tool:
        raise ParseFault("reply did not match FAULT_STEP/FAULT_TOOL", raw=text)
    if not 1 <= index <= history_len + 1:
        raise IndexOutOfRange(
            f"fault step {index} outside history of {history_len} step(s)"
        )
    return FaultReport(index, tool)


# --------------------------------------------------------------------------
# History
# --------------------------------------------------------------------------

@dataclass
class RepairRecord:
    fault_detail: str
    outcome: ToolOutcome


@dataclass
class SolutionStep:
    index: int
    tool: Optional[str]
    description: str
    outcome: ToolOutcome
    repairs: List[RepairRecord] = field(default_factory=list)


@dataclass
class SolutionHistory:
    steps: List[SolutionStep] = field(default_factory=list)

    def serialize(self) -> str:
        """[s_1 || o_1 || s_2 || o_2 || ...] with final outcomes only."""
        parts: List[str] = []
        for step in self.steps:
            parts.append(step.description)
            parts.append(step.outcome.reformulated)
        return " || ".join(parts)


# --------------------------------------------------------------------------
# Trajectories
# --------------------------------------------------------------------------

class TrajectoryStatus(str, Enum):
    SOLVED = "solved"
    STEP_LIMIT = "step_limit"
    REPAIR_LIMIT = "repair_limit"
    ABORTED = "aborted"


@dataclass
class TrajectoryStep:
    step: int
    tool: Optional[str]
    input: str
    output: str
    result: str


@dataclass
class Trajectory:
    x: str
    steps: List[TrajectoryStep] = field(default_factory=list)
    final_answer: Optional[str] = None
    status: TrajectoryStatus = TrajectoryStatus.ABORTED
    # Rich in-memory view for metrics; not serialized, not compared.
    history: Optional[SolutionHistory] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if (self.status is TrajectoryStatus.SOLVED) != (self.final_answer is not None):
            raise InvalidParams("final_answer is present iff status is solved")


def trajectory_to_record(trajectory: Trajectory) -> dict:
    return {
        "x": trajectory.x,
        "steps": [
            {
                "step": s.step,
                "tool": s.tool,
                "input": s.input,
                "output": s.output,
                "result": s.result,
            }
            for s in trajectory.steps
        ],
        "final_answer": trajectory.final_answer,
        "status": trajectory.status.value,
    }


def trajectory_from_record(record: dict) -> Trajectory:
    try:
        status = TrajectoryStatus(record["status"])
        steps = [
            TrajectoryStep(
                step=int(s["step"]),
                tool=s["tool"],
                input=s["input"],
                output=s["output"],
                result=s["result"],
            )
            for s in record.get("steps", [])
        ]
        return Trajectory(
            x=record["x"],
            steps=steps,
            final_answer=record.get("final_answer"),
            status=status,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed trajectory record: {exc}") from exc


def export_trajectory(trajectory: Trajectory, sink) -> None:
    """Append one JSON line for `trajectory` to a path or file object."""
    line = json.dumps(trajectory_to_record(trajectory), ensure_ascii=False, sort_keys=True)
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
    else:
        sink.write(line + "\n")


def import_trajectories(source) -> List[Trajectory]:
    """Read trajectories back from JSONL; inverse of export_trajectory."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    elif hasattr(source, "read"):
        lines = source.readlines()
    else:
        lines = list(source)
    out: List[Trajectory] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
        try:
            out.append(trajectory_from_record(record))
        except ParseError as exc:
            raise ParseError(str(exc), line=lineno) from exc
    return out


# --------------------------------------------------------------------------
# Audit log
# --------------------------------------------------------------------------

_AUDIT_KINDS = ("plan", "execute", "fault", "revise", "final")


class AuditLog:
    """Append-only, line-oriented session log. A None path disables it."""

    def __init__(self, path: Optional[str] = None):
        self._fh = open(path, "a", encoding="utf-8") if path else None

    def event(self, kind: str, detail: str) -> None:
        if kind not in _AUDIT_KINDS:
            raise InvalidParams(f"unknown audit event kind {kind!r}")
        if self._fh is None:
            return
        stamp = datetime.now(timezone.utc).isoformat(timespec="milliseconds")
        flat = detail.replace("\\", "\\\\").replace("\n", "\\n")
        self._fh.write(f"{stamp}\t{kind}\t{flat}\n")
        self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


# --------------------------------------------------------------------------
# Engine
# --------------------------------------------------------------------------

@dataclass
class Engine:
    """Everything a solve session needs, wired once and reused.

    `backends` maps roles to model backends: "action" for the planner and
    reflection, plus one entry per backed tool ("code", "math", "search").
    Solve sessions are sequential; run one at a time per engine.
    """

    registry: ToolRegistry
    backends: Dict[str, ModelBackend]
    templates: PromptTemplates = field(default_factory=PromptTemplates)
    graph: Optional[PropertyGraph] = None
    embedder: Optional[Embedder] = None
    sandbox: SandboxConfig = field(default_factory=SandboxConfig)
    search_provider: Optional[SearchProvider] = None
    compute_client: Optional[ComputeClient] = None
    retrieval_k: int = 5
    context_budget: int = 256
    max_steps: int = 10
    max_repairs_per_step: int = 3
    backend_retries: int = 1
    audit_path: Optional[str] = None

    def solve(self, task: Union[Task, str]) -> Trajectory:
        if isinstance(task, str):
            task = Task(task, self.max_steps, self.max_repairs_per_step)
        return solve(self, task)


def _fill(template: str, **values: str) -> str:
    try:
        return template.format_map(values)
    except (KeyError, ValueError) as exc:
        raise TemplateError(f"template fill failed: {exc}") from exc


def _call_backend(engine: Engine, role: str, instruction: str, payload: str) -> str:
    backend = engine.backends.get(role)
    if backend is None:
        raise BackendFailure(f"no backend configured for role {role!r}")
    attempts = max(1, engine.backend_retries + 1)
    last: Optional[Exception] = None
    for _ in range(attempts):
        try:
            return backend_complete(backend, instruction, payload)
        except ScriptExhausted:
            raise  # replaying will not produce more entries
        except RemoteError as exc:
            last = exc
            logger.warning("backend role %r failed, retrying: %s", role, exc)
    raise BackendFailure(f"role {role!r} failed after {attempts} attempt(s): {last}")


# --------------------------------------------------------------------------
# Loop operations
# --------------------------------------------------------------------------

def next_action(engine: Engine, task: Task, history: SolutionHistory) -> Action:
    """Ask the action generator for the next step or the final answer."""
    instruction = _fill(engine.templates.action, x=task.x, history=history.serialize())
    reply = _call_backend(engine, "action", instruction, payload=task.x)
    return parse_action(reply, engine.registry)


def execute_step(engine: Engine, task: Task, history: SolutionHistory, action: StepAction) -> ToolOutcome:
    """Dispatch a step to its tool expert; tool errors become failed outcomes."""
    if action.tool is None:
        # Internal-knowledge step: the planner's own statement is the outcome.
        return ToolOutcome(
            raw=action.description,
            reformulated=action.description,
            success=True,
        )
    instruction = _fill(
        engine.templates.expert_for(action.tool),
        x=task.x,
        history=history.serialize(),
        step=action.description,
    )
    handler = engine.registry.handler(action.tool)
    if handler is None:
        return ToolOutcome(
            raw="",
            reformulated=f"Error: tool {action.tool!r} has no handler",
            success=False,
            error_detail=f"tool {action.tool!r} has no handler",
        )
    try:
        return handler(engine, action.description, instruction)
    except GrasolveError as exc:
        return ToolOutcome(
            raw="",
            reformulated=f"Error: {exc}",
            success=False,
            error_detail=f"{type(exc).__name__}: {exc}",
        )


def identify_fault(
    engine: Engine, task: Task, history: SolutionHistory, failed_step: SolutionStep
) -> FaultReport:
    """Reflection phase: the action generator names the faulty step."""
    fault_desc = (
        f"step {failed_step.index} ({failed_step.tool or 'none'}): "
        f"{failed_step.outcome.error_detail or 'failed'}"
    )
    instruction = _fill(
        engine.templates.reflect, x=task.x, history=history.serialize(), fault=fault_desc
    )
    reply = _call_backend(engine, "action", instruction, payload=fault_desc)
    return parse_fault(reply, history_len=len(history.steps))


def revise_step(
    engine: Engine,
    task: Task,
    history: SolutionHistory,
    target: SolutionStep,
    fault_detail: str,
) -> ToolOutcome:
    """Revision phase: re-invoke the blamed step's tool with the fault shown.

    The new outcome replaces the step's outcome (so later history
    serializations see the repaired result) and a repair record is
    appended to the step. Steps after the target are not replayed.
    """
    instruction = _fill(
        engine.templates.revise,
        history=history.serialize(),
        step=target.description,
        fault=fault_detail,
    )
    if target.tool is None:
        reply = _call_backend(engine, "action", instruction, payload=fault_detail)
        outcome = ToolOutcome(raw=reply, reformulated=reply, success=True)
    else:
        handler = engine.registry.handler(target.tool)
        if handler is None:
            outcome = ToolOutcome(
                raw="",
                reformulated=f"Error: tool {target.tool!r} has no handler",
                success=False,
                error_detail=f"tool {target.tool!r} has no handler",
            )
        else:
            try:
                outcome = handler(engine, target.description, instruction)
            except GrasolveError as exc:
                outcome = ToolOutcome(
                    raw="",
                    reformulated=f"Error: {exc}",
                    success=False,
                    error_detail=f"{type(exc).__name__}: {exc}",
                )
    target.repairs.append(RepairRecord(fault_detail=fault_detail, outcome=outcome))
    target.outcome = outcome
    return outcome


def solve(engine: Engine, task: Task) -> Trajectory:
    """Run the full plan/execute/reflect/revise loop for one task.

    Stops with status solved (planner finalized), step_limit (max_steps
    exhausted), repair_limit (a step's shared plan+repair budget ran out),
    or aborted (the action backend failed after its retry budget). Total
    backend calls never exceed max_steps * (2 + 2 * max_repairs_per_step).
    """
    history = SolutionHistory()
    final_answer: Optional[str] = None
    status = TrajectoryStatus.STEP_LIMIT
    audit = AuditLog(engine.audit_path)
    try:
        for _ in range(task.max_steps):
            # Planner parse retries share the step's repair budget, which
            # keeps the total call count within the documented bound.
            repairs_used = 0
            action: Optional[Action] = None
            stopped = False
            while action is None:
                try:
                    action = next_action(engine, task, history)
                except ParseFault as exc:
                    audit.event("fault", f"planner parse fault: {exc}")
                    repairs_used += 1
                    if repairs_used > task.max_repairs_per_step:
                        status = TrajectoryStatus.REPAIR_LIMIT
                        audit.event("final", "stopped: planner parse retries exhausted")
                        stopped = True
                        break
            if stopped:
                break
            if isinstance(action, FinalAction):
                final_answer = action.answer
                status = TrajectoryStatus.SOLVED
                audit.event("final", final_answer)
                break
            audit.event(
                "plan",
                f"step {len(history.steps) + 1} tool={action.tool or 'none'}: {action.description}",
            )
            step = SolutionStep(
                index=len(history.steps) + 1,
                tool=action.tool,
                description=action.description,
                outcome=execute_step(engine, task, history, action),
            )
            audit.event(
                "execute",
                f"step {step.index} success={step.outcome.success}"
                + (f" detail={step.outcome.error_detail}" if not step.outcome.success else ""),
            )
            while not step.outcome.success and repairs_used < task.max_repairs_per_step:
                repairs_used += 1
                fault_detail = step.outcome.error_detail or "step failed"
                try:
                    report = identify_fault(engine, task, history, step)
                except (ParseFault, IndexOutOfRange) as exc:
                    audit.event("fault", f"reflection fault: {exc}")
                    continue
                audit.event("fault", f"blamed step {report.step_index} tool={report.tool}")
                if report.step_index == step.index:
                    target = step
                else:
                    target = history.steps[report.step_index - 1]
                outcome = revise_step(engine, task, history, target, fault_detail)
                audit.event(
                    "revise", f"step {target.index} success={outcome.success}"
                )
            history.steps.append(step)
            if not step.outcome.success:
                status = TrajectoryStatus.REPAIR_LIMIT
                audit.event("final", "stopped: repair budget exhausted")
                break
    except BackendFailure as exc:
        status = TrajectoryStatus.ABORTED
        final_answer = None
        audit.event("final", f"aborted: {exc}")
        logger.warning("solve aborted: %s", exc)
    finally:
        audit.close()

    steps = [
        TrajectoryStep(
            step=s.index,
            tool=s.tool,
            input=s.outcome.tool_input,
            output=s.outcome.raw,
            result=s.outcome.reformulated,
        )
        for s in history.steps
    ]
    return Trajectory(
        x=task.x,
        steps=steps,
        final_answer=final_answer,
        status=status,
        history=history,
    )
