"""Ranking metrics over (ranked list, target) pairs."""

from __future__ import annotations

from typing import Optional, Sequence, Tuple

from .model import RankedList


def rank_of(ranking: RankedList, target: str) -> Optional[int]:
    """1-based position of the target, or None if absent from the list."""
    for pos, (item, _) in enumerate(ranking.entries, start=1):
        if item == target:
            return pos
    return None


def mrr_at_k(rankings: Sequence[Tuple[RankedList, str]], k: int) -> float:
    """Mean of 1/rank(target) over cases, 0 when the target misses the top-k."""
    if not rankings:
        raise ValueError("no rankings to score")
    if k < 1:
        raise ValueError("k must be positive")
    total = 0.0
    for ranking, target in rankings:
        r = rank_of(ranking, target)
        if r is not None and r <= k:
            total += 1.0 / r
    return total / len(rankings)


def p_at_k(rankings: Sequence[Tuple[RankedList, str]], k: int) -> float:
    """Fraction of cases whose target appears in the top-k."""
    if not rankings:
        raise ValueError("no rankings to score")
    if k < 1:
        raise ValueError("k must be positive")
    hits = 0
    for ranking, target in rankings:
        r = rank_of(ranking, target)
        if r is not None and r <= k:
            hits += 1
    return hits / len(rankings)
