"""Edit distance and the mean-minimum distance score for locality strings."""

from __future__ import annotations

import unicodedata
from typing import Sequence

from arete.errors import EmptyReferenceError


def levenshtein(a: str, b: str) -> int:
    """Unit-cost insert/delete/substitute distance over code points (case-sensitive)."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def fold(text: str) -> str:
    """Lowercase and strip accents, for case- and accent-insensitive comparison."""
    decomposed = unicodedata.normalize("NFKD", text.casefold())
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


def similarity(a: str, b: str) -> float:
    """1 - distance / longer length on folded strings; 0 if either is empty."""
    a, b = fold(a), fold(b)
    if not a or not b:
        return 0.0
    return 1.0 - levenshtein(a, b) / max(len(a), len(b))


def mean_min_levenshtein(
    reference_terms: Sequence[str], extracted_terms: Sequence[str], normalize: bool = True
) -> float:
    """Average over reference terms of the distance to the closest extracted term.

    With no extracted terms each reference term costs its own length.
    """
    if not reference_terms:
        raise EmptyReferenceError("no reference terms to score against")
    prep = fold if normalize else (lambda s: s)
    refs = [prep(t) for t in reference_terms]
    cands = [prep(t) for t in extracted_terms]
    total = 0
    for ref in refs:
        total += min((levenshtein(ref, c) for c in cands), default=len(ref))
    return total / len(refs)
