"""Shared text normalization helpers.

One tokenizer is used everywhere token counts matter (chunking, context
budgets, BLEU/ROUGE) so that budgets measured at ingestion time agree with
budgets enforced at assembly time.
"""

from __future__ import annotations

import re
from typing import List, Tuple

# Alphanumeric runs, Unicode-aware. \w minus underscore.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_WS_RE = re.compile(r"\s+")


def tokenize(text: str) -> List[str]:
    """Lowercase `text` and split it on runs of non-alphanumeric characters.

    Returns the (possibly empty) list of tokens. This is the canonical
    tokenizer for chunk spans, token budgets, and n-gram metrics.
    """
    return [m.group(0).lower() for m in _TOKEN_RE.finditer(text)]


def token_spans(text: str) -> List[Tuple[str, int, int]]:
    """Tokenize while keeping each token's [start, end) character span.

    The token sequence is identical to :func:`tokenize`; spans index into
    the original (uncased) text so chunk text can be sliced verbatim.
    """
    return [(m.group(0).lower(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def count_tokens(text: str) -> int:
    return sum(1 for _ in _TOKEN_RE.finditer(text))


def normalize_whitespace(text: str) -> str:
    """Trim and collapse internal whitespace runs to single spaces."""
    return _WS_RE.sub(" ", text.strip())
