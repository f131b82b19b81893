"""Normalized string similarity measures.

Every measure maps two strings to ``[0, 1]``, is symmetric, and returns 1 for
identical non-empty inputs. Each one is split into a ``prepare`` step (run
once per entity) and a ``compare`` step (run once per pair) so partition
matching does not re-tokenize the same value for every pair.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from collections.abc import Callable
from dataclasses import dataclass
from typing import Any, Optional

from rapidfuzz.distance import Levenshtein

from .model import Entity

KINDS = ("editDistance", "trigram", "jaccardToken", "cosineToken")

_TOKEN_RE = re.compile(r"[^\W_]+")
_PAD_START = "\x02\x02"
_PAD_END = "\x03\x03"


def tokenize(text: str) -> list[str]:
    """Lowercase and split on every run of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


def trigrams(text: str) -> frozenset[str]:
    padded = _PAD_START + text + _PAD_END
    return frozenset(padded[i : i + 3] for i in range(len(padded) - 2))


def _set_jaccard(x: frozenset, y: frozenset) -> float:
    if not x and not y:
        return 1.0
    if not x or not y:
        return 0.0
    inter = len(x & y)
    return inter / (len(x) + len(y) - inter)


def _edit_compare(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - Levenshtein.distance(a, b) / longest


def _trigram_prepare(text: str) -> frozenset[str]:
    # The empty string gets no grams so the both-empty / one-empty rules apply.
    return trigrams(text) if text else frozenset()


def _cosine_prepare(text: str) -> tuple[Counter, int]:
    tf = Counter(tokenize(text))
    return tf, sum(v * v for v in tf.values())


def _cosine_compare(x: tuple[Counter, int], y: tuple[Counter, int]) -> float:
    (tx, nx), (ty, ny) = x, y
    if nx == 0 or ny == 0:
        return 1.0 if nx == ny else 0.0
    if len(ty) < len(tx):
        tx, ty = ty, tx
    dot = sum(v * ty[t] for t, v in tx.items() if t in ty)
    # Integer dot and norm product keep the result exactly symmetric.
    return min(1.0, dot / math.sqrt(nx * ny))


_PREPARE: dict[str, Callable[[str], Any]] = {
    "editDistance": lambda s: s,
    "trigram": _trigram_prepare,
    "jaccardToken": lambda s: frozenset(tokenize(s)),
    "cosineToken": _cosine_prepare,
}

_COMPARE: dict[str, Callable[[Any, Any], float]] = {
    "editDistance": _edit_compare,
    "trigram": _set_jaccard,
    "jaccardToken": _set_jaccard,
    "cosineToken": _cosine_compare,
}


def edit_distance_sim(a: str, b: str) -> float:
    """``1 - lev(a, b) / max(|a|, |b|)``; two empty strings are identical."""
    return _edit_compare(a, b)


def trigram_sim(a: str, b: str) -> float:
    """Jaccard coefficient over padded character 3-gram sets."""
    return _set_jaccard(_trigram_prepare(a), _trigram_prepare(b))


def jaccard_token_sim(a: str, b: str) -> float:
    return _set_jaccard(frozenset(tokenize(a)), frozenset(tokenize(b)))


def cosine_token_sim(a: str, b: str) -> float:
    return _cosine_compare(_cosine_prepare(a), _cosine_prepare(b))


@dataclass(frozen=True)
class SimilarityMeasure:
    """A matcher: one similarity function applied to one attribute."""

    kind: str
    attribute: str

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown similarity kind {self.kind!r}; expected one of {KINDS}")

    def prepare(self, entity: Entity) -> Optional[Any]:
        value = entity.get(self.attribute)
        return None if value is None else _PREPARE[self.kind](value)

    @property
    def compare(self) -> Callable[[Any, Any], float]:
        return _COMPARE[self.kind]


def apply_measure(measure: SimilarityMeasure, e1: Entity, e2: Entity) -> float:
    """Similarity of two entities under one matcher; an absent value scores 0."""
    v1, v2 = e1.get(measure.attribute), e2.get(measure.attribute)
    if v1 is None or v2 is None:
        return 0.0
    prep = _PREPARE[measure.kind]
    return _COMPARE[measure.kind](prep(v1), prep(v2))
