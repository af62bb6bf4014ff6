"""Embedding providers.

Neural encoders live behind the :class:`Embedder` protocol; the package
ships two deterministic providers so every pipeline stage can run and be
tested without model weights or network access:

* :class:`HashingEmbedder` - character-3-gram feature hashing, L2-normalized.
* :class:`FixtureEmbedder` - exact-text lookup from a JSON replay file, for
  tests that need planted vectors.
"""

from __future__ import annotations

import json
import math
import zlib
from typing import Dict, List, Optional, Protocol, Sequence

from .errors import DimensionMismatch, ParseError


class Embedder(Protocol):
    """Maps text to a fixed-dimension vector."""

    dim: int

    def embed(self, text: str) -> List[float]:
        ...


class HashingEmbedder:
    """Deterministic text embedder based on character-3-gram feature hashing.

    The lowercased text is padded with one sentinel on each side, every
    3-gram is hashed with crc32 into one of `dim` buckets with a +/-1 sign
    bit, and the accumulated vector is L2-normalized. Texts with no 3-grams
    embed to the zero vector (which the store's cosine treats as
    similarity 0 everywhere).
    """

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise DimensionMismatch(f"embedding dimension must be >= 1, got {dim}")
        self.dim = dim

    def embed(self, text: str) -> List[float]:
        vec = [0.0] * self.dim
        padded = "\x02" + text.lower() + "\x03"
        for i in range(len(padded) - 2):
            gram = padded[i : i + 3]
            h = zlib.crc32(gram.encode("utf-8"))
            sign = 1.0 if (h >> 16) & 1 == 0 else -1.0
            vec[h % self.dim] += sign
        norm = math.sqrt(sum(v * v for v in vec))
        if norm > 0.0:
            vec = [v / norm for v in vec]
        return vec


class FixtureEmbedder:
    """Replays planted vectors from an exact-text map.

    `table` maps input text to a vector of length `dim`. Unknown texts fall
    back to `default` when given, else to a HashingEmbedder of the same
    dimension so mixed fixtures stay usable.
    """

    def __init__(
        self,
        table: Dict[str, Sequence[float]],
        dim: int,
        default: Optional[Sequence[float]] = None,
    ):
        self.dim = dim
        self._default = list(default) if default is not None else None
        self._fallback = HashingEmbedder(dim)
        self._table: Dict[str, List[float]] = {}
        for key, vec in table.items():
            if len(vec) != dim:
                raise DimensionMismatch(
                    f"fixture vector for {key!r} has length {len(vec)}, expected {dim}"
                )
            self._table[key] = [float(v) for v in vec]

    @classmethod
    def from_file(cls, path: str) -> "FixtureEmbedder":
        """Load a JSON file of shape {"dim": D, "vectors": {text: [..]}}."""
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"embedding fixture {path}: {exc}") from exc
        if not isinstance(data, dict) or "dim" not in data:
            raise ParseError(f"embedding fixture {path}: expected object with 'dim'")
        return cls(data.get("vectors", {}), int(data["dim"]))

    def embed(self, text: str) -> List[float]:
        if text in self._table:
            return list(self._table[text])
        if self._default is not None:
            return list(self._default)
        return self._fallback.embed(text)
