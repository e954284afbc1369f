"""Evaluation metrics: strict entity-level P/R/F1, token accuracy,
Accuracy@k with OOD variants, and the Mann-Whitney U test.

Entity matching is strict span equality; zero-denominator precision and
recall are reported as 0 with a flag rather than dividing by zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

from .errors import DataError
from .normalize import CandidateList
from .tagging import EntitySpan, TagSequence, entity_spans


@dataclass(frozen=True)
class EntityPRF:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    zero_denominator: bool = False


@dataclass(frozen=True)
class AccuracyAtK:
    k: int
    value: float | None  # None when no query was evaluated
    evaluated_count: int


@dataclass(frozen=True)
class MannWhitneyResult:
    u_statistic: float
    p_value: float
    method: str  # exact | normal_approx
    significant: bool
    alpha: float


def _check_aligned(gold: list[TagSequence], pred: list[TagSequence]) -> None:
    gold_shape = [(s.doc_id, len(s.tokens)) for s in gold]
    pred_shape = [(s.doc_id, len(s.tokens)) for s in pred]
    if sorted(gold_shape) != sorted(pred_shape):
        raise DataError("gold and predicted sequences are not aligned by doc_id and token count")


def prf_from_spans(gold: set[EntitySpan], pred: set[EntitySpan]) -> EntityPRF:
    tp = len(gold & pred)
    fp = len(pred - gold)
    fn = len(gold - pred)
    zero = (tp + fp == 0) or (tp + fn == 0)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return EntityPRF(
        precision=precision, recall=recall, f1=f1, tp=tp, fp=fp, fn=fn,
        zero_denominator=zero,
    )


def entity_prf(gold: list[TagSequence], pred: list[TagSequence]) -> EntityPRF:
    """Strict entity-level scores: a predicted D-run counts as TP only when
    an identical (doc_id, start, end) gold run exists."""
    _check_aligned(gold, pred)
    gold_set = {span for seq in gold for span in entity_spans(seq)}
    pred_set = {span for seq in pred for span in entity_spans(seq)}
    return prf_from_spans(gold_set, pred_set)


def token_accuracy(gold: list[TagSequence], pred: list[TagSequence]) -> float:
    _check_aligned(gold, pred)
    pred_by_id = {s.doc_id: s for s in pred}
    total = 0
    equal = 0
    for g in gold:
        p = pred_by_id[g.doc_id]
        total += len(g.labels)
        equal += sum(a == b for a, b in zip(g.labels, p.labels))
    return equal / total if total else 0.0


def accuracy_at_k(
    gold: list[tuple[str, str]],
    preds: list[CandidateList],
    ks: list[int],
) -> list[AccuracyAtK]:
    """For each k, the fraction of queries whose gold cui appears among the
    first min(k, len) candidates."""
    by_query = {}
    for p in preds:
        if p.query_id in by_query:
            raise DataError(f"duplicate query_id {p.query_id!r} in predictions")
        by_query[p.query_id] = p
    seen = set()
    for query_id, _ in gold:
        if query_id in seen:
            raise DataError(f"duplicate query_id {query_id!r} in gold")
        seen.add(query_id)
        if query_id not in by_query:
            raise DataError(f"no candidate list for query {query_id!r}")

    out = []
    for k in ks:
        hits = 0
        for query_id, cui in gold:
            ranked = by_query[query_id].cuis()
            if cui in ranked[:k]:
                hits += 1
        n = len(gold)
        out.append(AccuracyAtK(k=k, value=hits / n if n else None, evaluated_count=n))
    return out


def ood_accuracy_at_k(
    gold: list[tuple[str, str]],
    preds: list[CandidateList],
    train_cuis: set[str],
    ks: list[int],
) -> list[AccuracyAtK]:
    """Accuracy@k restricted to queries whose gold cui never occurs in the
    training split."""
    ood_gold = [(q, c) for q, c in gold if c not in train_cuis]
    if not ood_gold:
        return [AccuracyAtK(k=k, value=None, evaluated_count=0) for k in ks]
    ood_ids = {q for q, _ in ood_gold}
    return accuracy_at_k(ood_gold, [p for p in preds if p.query_id in ood_ids], ks)


# -- Mann-Whitney U ----------------------------------------------------------

def _ranks(values: list[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for idx in order[i : j + 1]:
            ranks[idx] = avg
        i = j + 1
    return ranks


def _exact_two_sided_p(pooled: list[float], n: int, u_min: float) -> float:
    """P(U <= u_min) doubled, by full enumeration of which pooled slots
    belong to sample A.  Valid for tie-free pooled values."""
    total = 0
    at_most = 0
    size = len(pooled)
    ranks = _ranks(pooled)
    for combo in combinations(range(size), n):
        total += 1
        rank_sum = sum(ranks[i] for i in combo)
        u_a = rank_sum - n * (n + 1) / 2
        # Two-sided: double the lower tail of U_a; by symmetry of the null
        # distribution this covers the upper tail too.
        if u_a <= u_min:
            at_most += 1
    return min(1.0, 2 * at_most / total)


def mann_whitney_u(
    sample_a: list[float], sample_b: list[float], alpha: float = 0.05
) -> MannWhitneyResult:
    """Two-sided Mann-Whitney U test, U = min(U_a, U_b).

    The exact null distribution is enumerated when both samples have at
    most 8 observations and the pooled values are tie-free; otherwise a
    normal approximation with tie and continuity corrections is used.
    Symmetric in its arguments.
    """
    if not sample_a or not sample_b:
        raise DataError("mann_whitney_u requires two non-empty samples")
    n, m = len(sample_a), len(sample_b)
    pooled = list(sample_a) + list(sample_b)
    ranks = _ranks(pooled)
    rank_sum_a = sum(ranks[:n])
    u_a = rank_sum_a - n * (n + 1) / 2
    u_b = n * m - u_a
    u_min = min(u_a, u_b)

    tie_free = len(set(pooled)) == len(pooled)
    if n <= 8 and m <= 8 and tie_free:
        p = _exact_two_sided_p(pooled, n, u_min)
        method = "exact"
    else:
        mean = n * m / 2
        tie_sum = 0
        counts = {}
        for v in pooled:
            counts[v] = counts.get(v, 0) + 1
        for c in counts.values():
            tie_sum += c**3 - c
        total = n + m
        var = n * m / 12 * (total + 1 - tie_sum / (total * (total - 1)))
        if var == 0:
            p = 1.0
        else:
            z = (u_min - mean + 0.5) / math.sqrt(var)  # U=min, so z <= 0
            p = min(1.0, 2 * 0.5 * (1 + math.erf(z / math.sqrt(2))))
        method = "normal_approx"
    return MannWhitneyResult(
        u_statistic=u_min,
        p_value=p,
        method=method,
        significant=p < alpha,
        alpha=alpha,
    )
