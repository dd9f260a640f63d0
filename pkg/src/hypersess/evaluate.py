"""Time-aware test protocol and report.

Each test session is scored by rebuilding the graph from all but its final
event, normalizing the gap between the penultimate and final timestamps as
the query interval, and ranking the full catalog against the predicted item
embedding.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from . import model
from .graph import IntervalNormalizer, SessionRecord, build_session_graph
from .metrics import mrr_at_k, p_at_k
from .model import ModelParams, RankedList


@dataclass
class EvalReport:
    mrr_at_k: float
    p_at_k: float
    k: int
    n_test: int
    wall_time: float
    skipped: int = 0

    def csv_rows(self) -> List[Tuple[str, str]]:
        """Deterministic machine-readable fields (wall time excluded)."""
        return [
            ("k", str(self.k)),
            ("n_test", str(self.n_test)),
            ("mrr_at_k", repr(self.mrr_at_k)),
            ("p_at_k", repr(self.p_at_k)),
            ("skipped", str(self.skipped)),
        ]


def rank_test_sessions(
    params: ModelParams,
    records: Sequence[SessionRecord],
    norm: IntervalNormalizer,
) -> Tuple[List[Tuple[RankedList, str]], int]:
    """Full-catalog rankings for every usable test session.

    Sessions with fewer than 2 events, or touching items outside the
    vocabulary, are skipped and counted.
    """
    cases: List[Tuple[RankedList, str]] = []
    skipped = 0
    for rec in records:
        if len(rec.events) < 2:
            skipped += 1
            continue
        if any(item not in params.item_index for item, _ in rec.events):
            skipped += 1
            continue
        prefix = SessionRecord(rec.session_id, list(rec.events[:-1]))
        g = build_session_graph(prefix, norm, min_events=1)
        target_item, target_t = rec.events[-1]
        t_norm = norm(target_t - rec.events[-2][1])
        fw = model.forward_session(g, t_norm, params)
        ranking = model.score_items(fw.item_future, params, k=len(params.items))
        cases.append((ranking, target_item))
    return cases, skipped


def evaluate(
    params: ModelParams,
    records: Sequence[SessionRecord],
    k: int,
    norm: Optional[IntervalNormalizer] = None,
) -> EvalReport:
    if not records:
        raise ValueError("empty test split")
    norm = norm or IntervalNormalizer()
    start = time.perf_counter()
    cases, skipped = rank_test_sessions(params, records, norm)
    if not cases:
        raise ValueError("no scorable test sessions (all skipped)")
    report = EvalReport(
        mrr_at_k=mrr_at_k(cases, k),
        p_at_k=p_at_k(cases, k),
        k=k,
        n_test=len(cases),
        wall_time=time.perf_counter() - start,
        skipped=skipped,
    )
    return report


def popularity_baseline(
    train_records: Sequence[SessionRecord],
    test_records: Sequence[SessionRecord],
    k: int,
    vocabulary: Sequence[str],
) -> Tuple[float, float]:
    """Session-popularity ranking: in-session frequency first (recency as the
    tie break), then global training popularity.  Returns (MRR@k, P@k)."""
    global_counts: Dict[str, int] = {it: 0 for it in vocabulary}
    for rec in train_records:
        for item, _ in rec.events:
            if item in global_counts:
                global_counts[item] += 1
    catalog_by_pop = sorted(vocabulary, key=lambda it: (-global_counts[it], it))

    total_rr = 0.0
    hits = 0
    n = 0
    for rec in test_records:
        if len(rec.events) < 2:
            continue
        prefix = [item for item, _ in rec.events[:-1]]
        target = rec.events[-1][0]
        counts: Dict[str, int] = {}
        last_pos: Dict[str, int] = {}
        for pos, item in enumerate(prefix):
            counts[item] = counts.get(item, 0) + 1
            last_pos[item] = pos
        in_session = sorted(counts, key=lambda it: (-counts[it], -last_pos[it], it))
        ranking = in_session + [it for it in catalog_by_pop if it not in counts]
        n += 1
        if target in ranking[:k]:
            hits += 1
            total_rr += 1.0 / (ranking.index(target) + 1)
    if n == 0:
        raise ValueError("no scorable test sessions for the baseline")
    return total_rr / n, hits / n
