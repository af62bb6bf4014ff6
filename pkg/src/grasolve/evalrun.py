"""Batch evaluation harness: run the engine over a labeled dataset.

Each dataset record carries gold labels for up to four stages (planning,
selection, calling, generation). The harness solves every record, reduces
trajectories to stage predictions, and aggregates them with the pure metric
functions into a MetricReport whose JSON form is byte-deterministic.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set

from .errors import GrasolveError, InvalidParams, ParseError
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
from .orchestrator import Engine, Task, Trajectory, TrajectoryStatus
from .tools import ToolCall, validate_call

logger = logging.getLogger(__name__)

STAGES = ("planning", "selection", "calling", "generation")

# Display names per stage, in report order.
STAGE_METRICS = {
    "planning": ("TUA", "PR", "Acc"),
    "selection": ("Recall", "NDCG", "COMP"),
    "calling": ("Cons", "PE", "EH"),
    "generation": ("BLEU", "ROUGE-L", "EM"),
}


# --------------------------------------------------------------------------
# Dataset
# --------------------------------------------------------------------------

@dataclass
class EvalRecord:
    """One labeled query. Only planning labels are mandatory; records
    without selection or generation labels are skipped for those stages."""

    query: str
    requires_tool: bool
    gold_plan: List[str]
    gold_tools: Set[str] = field(default_factory=set)
    gold_params: Dict[str, str] = field(default_factory=dict)
    graded_relevance: Optional[List[float]] = None
    reference_answer: Optional[str] = None

    def __post_init__(self):
        if not self.query or not self.query.strip():
            raise InvalidParams("query must be non-empty")
        if self.graded_relevance is not None:
            if any(g < 0 for g in self.graded_relevance):
                raise InvalidParams("graded relevances must be >= 0")


_RECORD_FIELDS = {
    "query",
    "requires_tool",
    "gold_plan",
    "gold_tools",
    "gold_params",
    "graded_relevance",
    "reference_answer",
}


def record_from_dict(data: dict) -> EvalRecord:
    if not isinstance(data, dict):
        raise ParseError("record must be a JSON object")
    unknown = set(data) - _RECORD_FIELDS
    if unknown:
        raise ParseError(f"unknown record fields {sorted(unknown)}")
    try:
        query = data["query"]
        requires_tool = data["requires_tool"]
        gold_plan = data["gold_plan"]
    except KeyError as exc:
        raise ParseError(f"record missing field {exc.args[0]!r}") from None
    if not isinstance(query, str):
        raise ParseError("query must be a string")
    if not isinstance(requires_tool, bool):
        raise ParseError("requires_tool must be a boolean")
    if not isinstance(gold_plan, list) or not all(isinstance(t, str) for t in gold_plan):
        raise ParseError("gold_plan must be a list of tool names")
    gold_tools = data.get("gold_tools", [])
    if not isinstance(gold_tools, list) or not all(isinstance(t, str) for t in gold_tools):
        raise ParseError("gold_tools must be a list of tool names")
    gold_params = data.get("gold_params", {})
    if not isinstance(gold_params, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in gold_params.items()
    ):
        raise ParseError("gold_params must map 'tool.param' to string values")
    graded = data.get("graded_relevance")
    if graded is not None:
        if not isinstance(graded, list) or not all(
            isinstance(g, (int, float)) and not isinstance(g, bool) for g in graded
        ):
            raise ParseError("graded_relevance must be a list of numbers")
        graded = [float(g) for g in graded]
    reference = data.get("reference_answer")
    if reference is not None and not isinstance(reference, str):
        raise ParseError("reference_answer must be a string")
    try:
        return EvalRecord(
            query=query,
            requires_tool=requires_tool,
            gold_plan=list(gold_plan),
            gold_tools=set(gold_tools),
            gold_params=dict(gold_params),
            graded_relevance=graded,
            reference_answer=reference,
        )
    except InvalidParams as exc:
        raise ParseError(str(exc)) from exc


def load_dataset(source) -> List[EvalRecord]:
    """Read EvalRecords from JSONL (path, file object, or line iterable)."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    elif hasattr(source, "read"):
        lines = source.readlines()
    else:
        lines = list(source)
    records: List[EvalRecord] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
        try:
            records.append(record_from_dict(data))
        except ParseError as exc:
            raise ParseError(str(exc), line=lineno) from exc
    return records


# --------------------------------------------------------------------------
# Report
# --------------------------------------------------------------------------

@dataclass
class MetricReport:
    stages: Dict[str, Dict[str, float]]
    counts: Dict[str, int]
    config: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        for stage, metrics in self.stages.items():
            for name, value in metrics.items():
                if not 0.0 <= value <= 1.0:
                    raise InvalidParams(
                        f"{stage}/{name} = {value} outside [0, 1]"
                    )

    def to_json(self) -> str:
        payload = {"config": self.config, "counts": self.counts, "stages": self.stages}
        return json.dumps(payload, sort_keys=True, ensure_ascii=False)


def report_from_json(text: str) -> MetricReport:
    try:
        payload = json.loads(text)
        return MetricReport(
            stages=payload["stages"], counts=payload["counts"], config=payload["config"]
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(f"malformed metric report: {exc}") from exc


# --------------------------------------------------------------------------
# Harness
# --------------------------------------------------------------------------

def _tool_ranking(trajectory: Trajectory) -> List[str]:
    """Tools in first-use order; the solve loop has no separate ranker."""
    seen: List[str] = []
    for step in trajectory.steps:
        if step.tool and step.tool not in seen:
            seen.append(step.tool)
    return seen


def _binary_relevance(ranking: Sequence[str], gold: Set[str]) -> List[float]:
    return [1.0 if tool in gold else 0.0 for tool in ranking]


def run_eval(
    engine: Engine,
    dataset,
    stages: Optional[Iterable[str]] = None,
    k: int = 3,
    config: Optional[Dict[str, object]] = None,
) -> MetricReport:
    """Solve every record and score the requested stages.

    `dataset` may be a list of EvalRecords or anything load_dataset accepts.
    Per-record solve failures are logged and counted, never fatal. Records
    missing gold_tools are skipped for selection, records missing a
    reference_answer are skipped for generation. NDCG uses the record's
    graded_relevance when present, else binary relevance against gold_tools.
    """
    if not isinstance(dataset, (list, tuple)):
        dataset = load_dataset(dataset)
    records: List[EvalRecord] = list(dataset)
    wanted = set(STAGES) if stages is None else set(stages)
    unknown = wanted - set(STAGES)
    if unknown:
        raise InvalidParams(f"unknown stages {sorted(unknown)}")
    if k < 1:
        raise InvalidParams(f"k must be >= 1, got {k}")
    known_tools = set(engine.registry.names())
    for idx, record in enumerate(records, start=1):
        bad = record.gold_tools - known_tools
        if bad:
            raise InvalidParams(
                f"record {idx}: gold_tools {sorted(bad)} are not registered"
            )

    errors = 0
    scored: List[EvalRecord] = []
    trajectories: List[Trajectory] = []
    for idx, record in enumerate(records, start=1):
        try:
            trajectory = engine.solve(
                Task(record.query, engine.max_steps, engine.max_repairs_per_step)
            )
        except Exception:
            errors += 1
            logger.exception("record %d failed to solve", idx)
            continue
        scored.append(record)
        trajectories.append(trajectory)

    stage_values: Dict[str, Dict[str, float]] = {}

    if "planning" in wanted and scored:
        predictions = [
            PlanPrediction(
                used_tool=bool(_tool_ranking(t)),
                plan=tuple(s.tool or "none" for s in t.steps),
                solved=t.status is TrajectoryStatus.SOLVED,
            )
            for t in trajectories
        ]
        values = task_planning_metrics(scored, predictions)
        stage_values["planning"] = {
            "TUA": values["awareness"],
            "PR": values["pass_rate"],
            "Acc": values["accuracy"],
        }

    if "selection" in wanted:
        gold_sets: List[Set[str]] = []
        rankings: List[List[str]] = []
        graded: List[List[float]] = []
        for record, trajectory in zip(scored, trajectories):
            if not record.gold_tools:
                continue
            ranking = _tool_ranking(trajectory)
            gold_sets.append(record.gold_tools)
            rankings.append(ranking)
            if record.graded_relevance is not None:
                graded.append(record.graded_relevance)
            else:
                graded.append(_binary_relevance(ranking, record.gold_tools))
        if gold_sets:
            stage_values["selection"] = {
                "Recall": recall_at_k(gold_sets, rankings, k),
                "NDCG": ndcg_at_k(graded, k),
                "COMP": comp_at_k(gold_sets, [set(r[:k]) for r in rankings]),
            }

    if "calling" in wanted:
        validations = []
        param_pairs = []
        fault_recoveries: List[bool] = []
        for record, trajectory in zip(scored, trajectories):
            for step in trajectory.steps:
                if not step.tool:
                    continue
                protocol = engine.registry.lookup(step.tool)
                call = ToolCall(step.tool, {protocol.primary_param: step.input})
                validations.append(validate_call(protocol, call))
                gold_key = f"{step.tool}.{protocol.primary_param}"
                if gold_key in record.gold_params:
                    param_pairs.append((step.input, record.gold_params[gold_key]))
            history = trajectory.history
            if history is None:
                continue
            for sol_step in history.steps:
                # fault site: the step was revised or ended in failure
                if sol_step.repairs or not sol_step.outcome.success:
                    fault_recoveries.append(sol_step.outcome.success)
        values = tool_calling_metrics(validations, param_pairs, fault_recoveries)
        if values:
            stage_values["calling"] = {
                "Cons": values.get("cons"),
                "PE": values.get("pe"),
                "EH": values.get("eh"),
            }
            stage_values["calling"] = {
                name: value
                for name, value in stage_values["calling"].items()
                if value is not None
            }

    if "generation" in wanted:
        candidates: List[str] = []
        references: List[str] = []
        for record, trajectory in zip(scored, trajectories):
            if record.reference_answer is None:
                continue
            candidates.append(trajectory.final_answer or "")
            references.append(record.reference_answer)
        if candidates:
            stage_values["generation"] = {
                "BLEU": sum(bleu(c, r) for c, r in zip(candidates, references))
                / len(candidates),
                "ROUGE-L": sum(rouge_l(c, r) for c, r in zip(candidates, references))
                / len(candidates),
                "EM": exact_match(candidates, references),
            }

    echo: Dict[str, object] = dict(config or {})
    echo.setdefault("k", k)
    echo["stages"] = sorted(wanted)
    return MetricReport(
        stages=stage_values,
        counts={"records": len(records), "errors": errors},
        config=echo,
    )
