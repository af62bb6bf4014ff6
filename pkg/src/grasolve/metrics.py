"""Evaluation metrics over four stages: planning, selection, calling, generation.

Every function here is pure and operates on plain values, so each one can be
checked against a brute-force oracle. Text metrics share the package
tokenizer (lowercase, alphanumeric runs) so scores line up with chunk and
budget accounting elsewhere.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .errors import EmptyGoldSet, InvalidParams, LengthMismatch
from .textutil import normalize_whitespace, tokenize

__all__ = [
    "PlanPrediction",
    "task_planning_metrics",
    "recall_at_k",
    "ndcg_at_k",
    "comp_at_k",
    "tool_calling_metrics",
    "bleu",
    "rouge_l",
    "exact_match",
]


# --------------------------------------------------------------------------
# Task planning
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PlanPrediction:
    """One solve outcome reduced to what the planning metrics need."""

    used_tool: bool
    plan: Tuple[str, ...]
    solved: bool


def task_planning_metrics(records: Sequence, predictions: Sequence) -> Dict[str, float]:
    """Awareness, pass rate, and plan accuracy over paired records.

    Records need `.requires_tool` and `.gold_plan`; predictions need
    `.used_tool`, `.plan`, and `.solved`. Accuracy is exact tool-sequence
    equality against the gold plan.
    """
    if len(records) != len(predictions):
        raise LengthMismatch(
            f"{len(records)} records vs {len(predictions)} predictions"
        )
    if not records:
        raise LengthMismatch("no records to score")
    n = len(records)
    aware = 0
    passed = 0
    exact = 0
    for record, pred in zip(records, predictions):
        if bool(pred.used_tool) == bool(record.requires_tool):
            aware += 1
        if pred.solved:
            passed += 1
        if list(pred.plan) == list(record.gold_plan):
            exact += 1
    return {
        "awareness": aware / n,
        "pass_rate": passed / n,
        "accuracy": exact / n,
    }


# --------------------------------------------------------------------------
# Tool selection
# --------------------------------------------------------------------------

def recall_at_k(
    gold_sets: Sequence[Set[str]], rankings: Sequence[Sequence[str]], k: int
) -> float:
    """Mean over queries of |top-k ∩ gold| / |gold|."""
    if k < 1:
        raise InvalidParams(f"k must be >= 1, got {k}")
    if len(gold_sets) != len(rankings):
        raise LengthMismatch(f"{len(gold_sets)} gold sets vs {len(rankings)} rankings")
    if not gold_sets:
        return 0.0
    total = 0.0
    for gold, ranking in zip(gold_sets, rankings):
        gold = set(gold)
        if not gold:
            raise EmptyGoldSet("every query needs a non-empty gold tool set")
        top = set(ranking[:k])
        total += len(top & gold) / len(gold)
    return total / len(gold_sets)


def ndcg_at_k(graded: Sequence[Sequence[float]], k: int) -> float:
    """Mean normalized discounted cumulative gain at cutoff k.

    Each inner sequence holds graded relevances in ranked order. Gain is
    (2^g - 1) / log2(i + 1) at 1-based position i. Queries whose ideal DCG
    is zero contribute zero rather than dividing by it.
    """
    if k < 1:
        raise InvalidParams(f"k must be >= 1, got {k}")
    if not graded:
        return 0.0
    total = 0.0
    for gains in graded:
        gains = list(gains)
        if any(g < 0 for g in gains):
            raise InvalidParams("graded relevances must be >= 0")
        dcg = _dcg(gains[:k])
        idcg = _dcg(sorted(gains, reverse=True)[:k])
        if idcg > 0:
            total += dcg / idcg
    return total / len(graded)


def _dcg(gains: Sequence[float]) -> float:
    return sum(
        (2.0 ** g - 1.0) / math.log2(i + 1) for i, g in enumerate(gains, start=1)
    )


def comp_at_k(
    gold_sets: Sequence[Set[str]], retrieved_sets: Sequence[Set[str]]
) -> float:
    """Fraction of queries whose gold set is fully inside the retrieved set."""
    if len(gold_sets) != len(retrieved_sets):
        raise LengthMismatch(
            f"{len(gold_sets)} gold sets vs {len(retrieved_sets)} retrieved sets"
        )
    if not gold_sets:
        return 0.0
    hits = sum(
        1 for gold, got in zip(gold_sets, retrieved_sets) if set(gold) <= set(got)
    )
    return hits / len(gold_sets)


# --------------------------------------------------------------------------
# Tool calling
# --------------------------------------------------------------------------

def tool_calling_metrics(
    validations: Sequence,
    param_pairs: Sequence[Tuple[str, str]],
    fault_recoveries: Sequence[bool],
) -> Dict[str, float]:
    """Consistency, parameter extraction, and error handling rates.

    `validations` are ValidationReport-shaped (required_ok / required_total
    counters); `param_pairs` are (extracted, gold) strings compared after
    strip; `fault_recoveries` flag whether each encountered fault ended in a
    successful outcome. A metric whose denominator is zero is omitted from
    the result instead of being reported as 0.
    """
    out: Dict[str, float] = {}
    required_total = sum(v.required_total for v in validations)
    if required_total > 0:
        required_ok = sum(v.required_ok for v in validations)
        out["cons"] = required_ok / required_total
    if param_pairs:
        correct = sum(
            1 for got, want in param_pairs if str(got).strip() == str(want).strip()
        )
        out["pe"] = correct / len(param_pairs)
    if fault_recoveries:
        out["eh"] = sum(1 for ok in fault_recoveries if ok) / len(fault_recoveries)
    return out


# --------------------------------------------------------------------------
# Response generation
# --------------------------------------------------------------------------

def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: str, reference: str, max_n: int = 4) -> float:
    """BLEU with clipped n-gram precisions and the standard brevity penalty.

    The order is capped at the candidate length (a 3-token candidate is
    scored with up to trigrams) and there is no smoothing: any zero
    precision zeroes the score.
    """
    if max_n < 1:
        raise InvalidParams(f"max_n must be >= 1, got {max_n}")
    cand = tokenize(candidate)
    ref = tokenize(reference)
    c = len(cand)
    if c == 0:
        return 0.0
    orders = min(max_n, c)
    log_sum = 0.0
    for n in range(1, orders + 1):
        cand_counts = _ngram_counts(cand, n)
        ref_counts = _ngram_counts(ref, n)
        clipped = sum(
            min(count, ref_counts.get(gram, 0)) for gram, count in cand_counts.items()
        )
        total = max(0, c - n + 1)
        if clipped == 0 or total == 0:
            return 0.0
        log_sum += (1.0 / orders) * math.log(clipped / total)
    r = len(ref)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # two-row DP keeps memory at O(min side)
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str, beta: float = 1.0) -> float:
    """LCS-based F score: (1+b^2)PR / (P + b^2 R), P and R over token counts."""
    if beta < 0:
        raise InvalidParams(f"beta must be >= 0, got {beta}")
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    b2 = beta * beta
    return ((1.0 + b2) * precision * recall) / (precision + b2 * recall)


def exact_match(candidates: Sequence[str], references: Sequence[str]) -> float:
    """Fraction of candidates equal to their reference after whitespace
    normalization (trim plus collapse); comparison stays case-sensitive."""
    if len(candidates) != len(references):
        raise LengthMismatch(
            f"{len(candidates)} candidates vs {len(references)} references"
        )
    if not candidates:
        raise LengthMismatch("no responses to score")
    hits = sum(
        1
        for cand, ref in zip(candidates, references)
        if normalize_whitespace(cand) == normalize_whitespace(ref)
    )
    return hits / len(candidates)
